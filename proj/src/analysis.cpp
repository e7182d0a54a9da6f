#include "pronref/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "pronref/error.hpp"
#include "pronref/log.hpp"
#include "pronref/text.hpp"

namespace pronref {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string f3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v == 0.0 ? 0.0 : v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ProfileMatrix build_profiles(const std::map<std::string, RefClass>& gold, std::span<const Segment> segments,
                             GroupBy group_by) {
  std::map<std::string, std::size_t> tokens;
  for (const auto& s : segments) tokens[group_name(s, group_by)] += s.token_count();

  SegmentIndex index(segments);
  std::map<std::string, ClassCounts> counts;
  for (const auto& [id, label] : gold) {
    auto inst = parse_instance_id(id);
    if (!inst) throw DataError("malformed instance id '" + id + "'");
    const Segment* seg = index.find(inst->segment_key());
    if (!seg) throw DataError("no segment metadata for instance '" + id + "'");
    if (group_by == GroupBy::Speaker && seg->speaker.empty())
      throw DataError("segment of instance '" + id + "' has no speaker");
    ++counts[group_name(*seg, group_by)][index_of(label)];
  }

  ProfileMatrix p;
  p.group_by = group_by;
  for (const auto& [group, n] : tokens) {
    if (n == 0) {
      log::warn("group '" + group + "' has no tokens; dropped from profiles");
      continue;
    }
    p.groups.push_back(group);
    p.tokens.push_back(n);
    const ClassCounts c = counts.count(group) ? counts.at(group) : ClassCounts{};
    ClassVector r{};
    for (std::size_t y = 0; y < kNumClasses; ++y) r[y] = static_cast<double>(c[y]) * 1000.0 / static_cast<double>(n);
    p.counts.push_back(c);
    p.rates.push_back(r);
  }
  return p;
}

void write_profiles_csv(std::ostream& out, const ProfileMatrix& p) {
  out << (p.group_by == GroupBy::Party ? "party" : "speaker") << ",tokens";
  for (RefClass c : kAllClasses) out << ',' << to_string(c) << "_rate";
  for (RefClass c : kAllClasses) out << ',' << to_string(c) << "_count";
  out << '\n';
  for (std::size_t g = 0; g < p.groups.size(); ++g) {
    out << csv_field(p.groups[g]) << ',' << p.tokens[g];
    for (double r : p.rates[g]) out << ',' << num(r);
    for (auto c : p.counts[g]) out << ',' << c;
    out << '\n';
  }
}

void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& values,
                  std::vector<std::vector<double>>& vectors) {
  const std::size_t n = a.size();
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) vectors[i][i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += a[i][i] * a[i][i];
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    }
    if (off <= 1e-30 * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors[k][p], vkq = vectors[k][q];
          vectors[k][p] = c * vkp - s * vkq;
          vectors[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a[i][i];
}

PCAResult pca(const std::vector<std::vector<double>>& rows, const std::vector<std::string>& variables,
              bool standardize) {
  const std::size_t n = rows.size();
  if (n < 2) throw DataError("PCA needs at least two rows");
  const std::size_t p_all = variables.size();
  for (const auto& r : rows)
    if (r.size() != p_all) throw DataError("PCA rows differ in width");

  std::vector<double> mean(p_all, 0.0), sd(p_all, 0.0);
  for (std::size_t j = 0; j < p_all; ++j) {
    for (const auto& r : rows) mean[j] += r[j];
    mean[j] /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[j] - mean[j]) * (r[j] - mean[j]);
    sd[j] = std::sqrt(ss / static_cast<double>(n - 1));
  }

  PCAResult res;
  std::vector<std::size_t> keep;
  std::size_t varying = 0;
  for (std::size_t j = 0; j < p_all; ++j) {
    if (sd[j] > 0.0) ++varying;
    if (standardize && sd[j] == 0.0) {
      log::warn("PCA: column '" + variables[j] + "' has zero variance; dropped");
      continue;
    }
    keep.push_back(j);
  }
  if (varying < 2) throw DataError("PCA needs at least two columns with nonzero variance");
  const std::size_t p = keep.size();
  for (auto j : keep) {
    res.variables.push_back(variables[j]);
    res.means.push_back(mean[j]);
    res.scales.push_back(standardize ? sd[j] : 1.0);
  }

  std::vector<std::vector<double>> z(n, std::vector<double>(p));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < p; ++j) z[r][j] = (rows[r][keep[j]] - res.means[j]) / res.scales[j];

  std::vector<std::vector<double>> cov(p, std::vector<double>(p, 0.0));
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a; b < p; ++b) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += z[r][a] * z[r][b];
      cov[a][b] = cov[b][a] = s / static_cast<double>(n - 1);
    }
  }

  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
  jacobi_eigen(cov, values, vectors);

  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] > values[y]; });

  double total = 0.0;
  for (std::size_t j = 0; j < p; ++j) total += cov[j][j];
  for (std::size_t i : order) {
    std::vector<double> comp(p);
    for (std::size_t k = 0; k < p; ++k) comp[k] = vectors[k][i];
    std::size_t big = 0;
    for (std::size_t k = 1; k < p; ++k)
      if (std::abs(comp[k]) > std::abs(comp[big])) big = k;
    if (comp[big] < 0.0)
      for (double& c : comp) c = -c;
    const double ev = std::max(values[i], 0.0);
    std::vector<double> load(p);
    for (std::size_t k = 0; k < p; ++k) load[k] = comp[k] * std::sqrt(ev);
    res.components.push_back(std::move(comp));
    res.eigenvalues.push_back(ev);
    res.explained_variance_ratio.push_back(total > 0.0 ? ev / total : 0.0);
    res.loadings.push_back(std::move(load));
  }

  res.scores.assign(n, std::vector<double>(p, 0.0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < p; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += z[r][k] * res.components[i][k];
      res.scores[r][i] = s;
    }
  return res;
}

PCAResult pca(const ProfileMatrix& profiles, bool standardize) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : profiles.rates) rows.emplace_back(r.begin(), r.end());
  std::vector<std::string> vars;
  for (RefClass c : kAllClasses) vars.emplace_back(to_string(c));
  return pca(rows, vars, standardize);
}

void write_loadings_csv(std::ostream& out, const PCAResult& r) {
  out << "variable";
  for (std::size_t i = 0; i < r.loadings.size(); ++i) out << ",PC" << i + 1;
  out << '\n';
  for (std::size_t k = 0; k < r.variables.size(); ++k) {
    out << csv_field(r.variables[k]);
    for (const auto& l : r.loadings) out << ',' << num(l[k]);
    out << '\n';
  }
}

void write_scores_csv(std::ostream& out, const PCAResult& r, std::span<const std::string> labels) {
  if (labels.size() != r.scores.size()) throw DataError("score labels do not match PCA rows");
  out << "row";
  for (std::size_t i = 0; i < r.components.size(); ++i) out << ",PC" << i + 1;
  out << '\n';
  for (std::size_t row = 0; row < r.scores.size(); ++row) {
    out << csv_field(labels[row]);
    for (double s : r.scores[row]) out << ',' << num(s);
    out << '\n';
  }
}

void write_eigenvalues_csv(std::ostream& out, const PCAResult& r) {
  out << "component,eigenvalue,explained_variance_ratio\n";
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i)
    out << "PC" << i + 1 << ',' << num(r.eigenvalues[i]) << ',' << num(r.explained_variance_ratio[i]) << '\n';
}

std::string biplot_svg(const PCAResult& r, std::span<const std::string> labels) {
  if (r.components.size() < 2) throw DataError("biplot needs two components");
  if (labels.size() != r.scores.size()) throw DataError("biplot labels do not match PCA rows");
  constexpr double centre = 300.0, radius = 240.0;

  double smax = 0.0, lmax = 0.0;
  for (const auto& s : r.scores) smax = std::max({smax, std::abs(s[0]), std::abs(s[1])});
  for (std::size_t k = 0; k < r.variables.size(); ++k)
    lmax = std::max({lmax, std::abs(r.loadings[0][k]), std::abs(r.loadings[1][k])});
  const double ss = smax > 0.0 ? radius / smax : 0.0;
  const double ls = lmax > 0.0 ? radius / lmax : 0.0;
  auto x = [&](double v, double scale) { return f3(centre + v * scale); };
  auto y = [&](double v, double scale) { return f3(centre - v * scale); };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
  svg += "<defs><marker id=\"head\" markerWidth=\"8\" markerHeight=\"8\" refX=\"7\" refY=\"4\" orient=\"auto\">"
         "<path d=\"M0,0 L8,4 L0,8 z\" fill=\"#b2182b\"/></marker></defs>\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"600\" height=\"600\" fill=\"white\"/>\n";
  svg += "<g id=\"axes\" stroke=\"#999999\" stroke-width=\"1\">\n";
  svg += "<line x1=\"30\" y1=\"300\" x2=\"570\" y2=\"300\"/>\n<line x1=\"300\" y1=\"30\" x2=\"300\" y2=\"570\"/>\n</g>\n";
  svg += "<text x=\"570\" y=\"320\" text-anchor=\"end\" font-size=\"12\">PC1 (" +
         format_fixed(100.0 * r.explained_variance_ratio[0], 1) + "%)</text>\n";
  svg += "<text x=\"310\" y=\"40\" font-size=\"12\">PC2 (" + format_fixed(100.0 * r.explained_variance_ratio[1], 1) +
         "%)</text>\n";
  svg += "<g id=\"scores\" fill=\"#2166ac\">\n";
  for (std::size_t row = 0; row < r.scores.size(); ++row) {
    const auto cx = x(r.scores[row][0], ss), cy = y(r.scores[row][1], ss);
    svg += "<circle cx=\"" + cx + "\" cy=\"" + cy + "\" r=\"3\"/>";
    svg += "<text x=\"" + cx + "\" y=\"" + cy + "\" dx=\"4\" dy=\"-4\" font-size=\"9\">" + xml_escape(labels[row]) +
           "</text>\n";
  }
  svg += "</g>\n<g id=\"loadings\" stroke=\"#b2182b\" fill=\"#b2182b\">\n";
  for (std::size_t k = 0; k < r.variables.size(); ++k) {
    const auto ex = x(r.loadings[0][k], ls), ey = y(r.loadings[1][k], ls);
    svg += "<line x1=\"300.000\" y1=\"300.000\" x2=\"" + ex + "\" y2=\"" + ey + "\" marker-end=\"url(#head)\"/>";
    svg += "<text x=\"" + ex + "\" y=\"" + ey + "\" stroke=\"none\" font-size=\"10\">" + xml_escape(r.variables[k]) +
           "</text>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

void emit_biplot(const PCAResult& result, std::span<const std::string> labels, const std::filesystem::path& path) {
  const std::string svg = biplot_svg(result, labels);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << svg;
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace pronref
