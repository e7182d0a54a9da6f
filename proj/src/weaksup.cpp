#include "pronref/weaksup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>

#include "pronref/error.hpp"
#include "pronref/log.hpp"
#include "pronref/random.hpp"
#include "pronref/text.hpp"

namespace pronref {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr double kWrongClasses = static_cast<double>(kNumClasses - 1);

double clamp_param(double v) { return std::clamp(v, kParamFloor, kParamCeil); }

// Maximizes sum_y mass[y] * log(p[y]) over the simplex with p[y] >= floor.
ClassVector project_with_floor(const ClassVector& mass, double floor) {
  std::array<bool, kNumClasses> fixed{};
  double scale = 0.0;
  while (true) {
    double free_mass = 0.0;
    std::size_t n_fixed = 0;
    for (std::size_t y = 0; y < kNumClasses; ++y) {
      if (fixed[y]) {
        ++n_fixed;
      } else {
        free_mass += mass[y];
      }
    }
    const double free_prob = 1.0 - floor * static_cast<double>(n_fixed);
    scale = free_mass > 0.0 ? free_prob / free_mass : 0.0;
    bool changed = false;
    for (std::size_t y = 0; y < kNumClasses; ++y) {
      if (!fixed[y] && mass[y] * scale < floor) {
        fixed[y] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  ClassVector p{};
  for (std::size_t y = 0; y < kNumClasses; ++y) p[y] = fixed[y] ? floor : mass[y] * scale;
  return p;
}

double log_sum_exp(const ClassVector& v) {
  double m = *std::max_element(v.begin(), v.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// log P(y) + sum_j log P(v_j | y, LF j voted), for every y.
ClassVector joint_log_scores(std::span<const std::int8_t> votes, const LabelModelParams& params) {
  ClassVector s{};
  for (std::size_t y = 0; y < kNumClasses; ++y) s[y] = std::log(params.priors[y]);
  for (std::size_t j = 0; j < votes.size(); ++j) {
    if (votes[j] == kAbstain) continue;
    const double hit = std::log(params.accuracy[j]);
    const double miss = std::log((1.0 - params.accuracy[j]) / kWrongClasses);
    for (std::size_t y = 0; y < kNumClasses; ++y) s[y] += static_cast<std::size_t>(votes[j]) == y ? hit : miss;
  }
  return s;
}

double propensity_term(std::span<const std::int8_t> votes, const LabelModelParams& params) {
  double c = 0.0;
  for (std::size_t j = 0; j < votes.size(); ++j)
    c += votes[j] == kAbstain ? std::log(1.0 - params.propensity[j]) : std::log(params.propensity[j]);
  return c;
}

std::size_t pick_with_tiebreak(const ClassVector& score, const ClassVector& tiebreak) {
  std::size_t best = 0;
  for (std::size_t y = 1; y < kNumClasses; ++y) {
    if (score[y] > score[best] || (score[y] == score[best] && tiebreak[y] > tiebreak[best])) best = y;
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Label matrix

LabelMatrix matrix_from_hits(std::span<const Pattern> patterns, const HitTable& hits,
                             std::span<const PronounInstance> instances) {
  LabelMatrix m;
  std::map<std::string, std::size_t> column;
  for (const auto& p : patterns) {
    column[p.name] = m.lf_names.size();
    m.lf_names.push_back(p.name);
    m.lf_labels.push_back(p.label);
  }
  std::map<std::string, std::vector<const Match*>> by_instance;
  for (const auto& match : hits.matches) by_instance[match.instance_id].push_back(&match);

  for (const auto& inst : instances) {
    auto it = by_instance.find(inst.instance_id);
    if (it == by_instance.end()) {
      ++m.excluded;
      continue;
    }
    m.instance_ids.push_back(inst.instance_id);
    const std::size_t base = m.cells.size();
    m.cells.resize(base + m.cols(), kAbstain);
    for (const Match* match : it->second) {
      auto col = column.find(match->pattern_name);
      if (col == column.end()) throw DataError("match from unknown pattern '" + match->pattern_name + "'");
      m.cells[base + col->second] = static_cast<std::int8_t>(index_of(match->label));
    }
  }
  return m;
}

LabelMatrix build_matrix(std::span<const Pattern> patterns, std::span<const Segment> segments,
                         const std::set<std::string>& test_docs) {
  std::set<std::string> leaked;
  for (const auto& s : segments)
    if (test_docs.count(s.doc_id)) leaked.insert(s.doc_id);
  if (!leaked.empty())
    throw DataError("training corpus contains test documents: " + join(leaked, ", "));
  auto instances = extract_instances(segments);
  auto hits = match_all(patterns, segments);
  return matrix_from_hits(patterns, hits, instances);
}

void write_matrix_tsv(std::ostream& out, const LabelMatrix& m) {
  out << "# excluded\t" << m.excluded << '\n' << "instance_id";
  for (const auto& n : m.lf_names) out << '\t' << n;
  out << "\n# label";
  for (RefClass c : m.lf_labels) out << '\t' << to_string(c);
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.instance_ids[r];
    for (auto v : m.row(r)) out << '\t' << (v == kAbstain ? std::string_view("-") : to_string(class_at(v)));
    out << '\n';
  }
}

LabelMatrix read_matrix_tsv(std::istream& in) {
  LabelMatrix m;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false, have_labels = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols[0] == "# excluded") {
      m.excluded = cols.size() > 1 ? std::stoull(cols[1]) : 0;
    } else if (!have_header) {
      if (cols[0] != "instance_id") throw DataError("matrix line " + std::to_string(line_no) + ": missing header");
      m.lf_names.assign(cols.begin() + 1, cols.end());
      have_header = true;
    } else if (cols[0] == "# label") {
      if (cols.size() != m.cols() + 1) throw DataError("matrix label row has wrong width");
      for (std::size_t c = 1; c < cols.size(); ++c) m.lf_labels.push_back(ref_class_from_string(cols[c]));
      have_labels = true;
    } else {
      if (!have_labels) throw DataError("matrix is missing its '# label' row");
      if (cols.size() != m.cols() + 1)
        throw DataError("matrix line " + std::to_string(line_no) + ": expected " + std::to_string(m.cols() + 1) +
                        " columns");
      m.instance_ids.push_back(cols[0]);
      for (std::size_t c = 1; c < cols.size(); ++c) {
        if (cols[c] == "-") {
          m.cells.push_back(kAbstain);
        } else {
          auto label = ref_class_from_string(cols[c]);
          if (label != m.lf_labels[c - 1])
            throw DataError("matrix line " + std::to_string(line_no) + ": LF '" + m.lf_names[c - 1] +
                            "' votes a class other than its own");
          m.cells.push_back(static_cast<std::int8_t>(index_of(label)));
        }
      }
    }
  }
  if (!have_header) throw DataError("empty label matrix file");
  return m;
}

// ---------------------------------------------------------------------------
// Majority vote

ClassVector vote_shares(const LabelMatrix& matrix) {
  ClassVector shares{};
  double total = 0.0;
  for (auto v : matrix.cells) {
    if (v == kAbstain) continue;
    shares[static_cast<std::size_t>(v)] += 1.0;
    total += 1.0;
  }
  for (auto& s : shares) s = total > 0.0 ? s / total : 1.0 / kNumClasses;
  return shares;
}

std::vector<SilverLabel> majority_vote(const LabelMatrix& matrix) {
  const ClassVector shares = vote_shares(matrix);
  std::vector<SilverLabel> out;
  out.reserve(matrix.rows());
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    ClassVector counts{};
    double total = 0.0;
    for (auto v : matrix.row(r)) {
      if (v == kAbstain) continue;
      counts[static_cast<std::size_t>(v)] += 1.0;
      total += 1.0;
    }
    SilverLabel s;
    s.instance_id = matrix.instance_ids[r];
    s.source = SilverSource::Majority;
    if (total == 0.0) {
      s.posterior = shares;
    } else {
      for (std::size_t y = 0; y < kNumClasses; ++y) s.posterior[y] = counts[y] / total;
    }
    s.hard_label = class_at(pick_with_tiebreak(s.posterior, shares));
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Label model

ClassVector model_posterior(std::span<const std::int8_t> votes, const LabelModelParams& params) {
  ClassVector s = joint_log_scores(votes, params);
  const double z = log_sum_exp(s);
  for (auto& x : s) x = std::exp(x - z);
  return s;
}

double log_likelihood(const LabelMatrix& matrix, const LabelModelParams& params) {
  double ll = 0.0;
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    auto votes = matrix.row(r);
    ll += propensity_term(votes, params) + log_sum_exp(joint_log_scores(votes, params));
  }
  return ll;
}

LabelModelParams fit_label_model(const LabelMatrix& matrix, const LabelModelOptions& options) {
  const std::size_t n = matrix.rows();
  const std::size_t m = matrix.cols();
  if (m < 2) throw DataError("label model needs at least two labeling functions, got " + std::to_string(m));
  if (n == 0) throw DataError("label model needs a non-empty label matrix");
  if (options.max_iter < 1) throw UsageError("label model max_iter must be positive");

  LabelModelParams params;
  params.lf_names = matrix.lf_names;
  params.lf_labels = matrix.lf_labels;
  params.options = options;
  params.accuracy.assign(m, 0.0);
  params.propensity.assign(m, 0.0);

  // Initialization: accuracy from agreement with the majority vote, priors
  // from vote shares.
  const auto mv = majority_vote(matrix);
  std::vector<std::size_t> votes(m, 0), agree(m, 0);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = matrix.row(r);
    for (std::size_t j = 0; j < m; ++j) {
      if (row[j] == kAbstain) continue;
      ++votes[j];
      if (class_at(static_cast<std::size_t>(row[j])) == mv[r].hard_label) ++agree[j];
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (votes[j] == 0) log::warn("labeling function '" + matrix.lf_names[j] + "' never fires; propensity floor applied");
    params.propensity[j] = clamp_param(static_cast<double>(votes[j]) / static_cast<double>(n));
    const double rate = votes[j] == 0 ? 0.0 : static_cast<double>(agree[j]) / static_cast<double>(votes[j]);
    params.accuracy[j] = std::clamp(rate, 0.55, 0.95);
  }
  params.priors = project_with_floor(vote_shares(matrix), kParamFloor);

  std::vector<ClassVector> q(n);
  auto e_step = [&] {
    double ll = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      auto row = matrix.row(r);
      ClassVector s = joint_log_scores(row, params);
      const double z = log_sum_exp(s);
      for (std::size_t y = 0; y < kNumClasses; ++y) q[r][y] = std::exp(s[y] - z);
      ll += propensity_term(row, params) + z;
    }
    return ll;
  };
  auto m_step = [&] {
    ClassVector mass{};
    std::vector<double> correct(m, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      auto row = matrix.row(r);
      for (std::size_t y = 0; y < kNumClasses; ++y) mass[y] += q[r][y];
      for (std::size_t j = 0; j < m; ++j)
        if (row[j] != kAbstain) correct[j] += q[r][static_cast<std::size_t>(row[j])];
    }
    params.priors = project_with_floor(mass, kParamFloor);
    for (std::size_t j = 0; j < m; ++j) {
      if (votes[j] > 0) params.accuracy[j] = clamp_param(correct[j] / static_cast<double>(votes[j]));
    }
  };

  for (int it = 0; it < options.max_iter; ++it) {
    const double ll = e_step();
    params.log_likelihood_trace.push_back(ll);
    if (it > 0 && ll - params.log_likelihood_trace[static_cast<std::size_t>(it) - 1] < options.tol) {
      params.converged = true;
      break;
    }
    m_step();
    ++params.iterations;
  }
  if (!params.converged) params.log_likelihood_trace.push_back(e_step());
  return params;
}

SilverLabel predict_row(const std::string& instance_id, std::span<const std::int8_t> votes,
                        const LabelModelParams& params) {
  if (votes.size() != params.accuracy.size())
    throw DataError("vote row has " + std::to_string(votes.size()) + " entries, model expects " +
                    std::to_string(params.accuracy.size()));
  SilverLabel s;
  s.instance_id = instance_id;
  s.source = SilverSource::LabelModel;

  std::array<bool, kNumClasses> voted{};
  bool any = false;
  for (auto v : votes) {
    if (v == kAbstain) continue;
    voted[static_cast<std::size_t>(v)] = true;
    any = true;
  }
  if (!any) {
    s.posterior = params.priors;
  } else {
    ClassVector full = joint_log_scores(votes, params);
    for (std::size_t y = 0; y < kNumClasses; ++y)
      if (!voted[y]) full[y] = -std::numeric_limits<double>::infinity();
    const double z = log_sum_exp(full);
    for (std::size_t y = 0; y < kNumClasses; ++y) s.posterior[y] = voted[y] ? std::exp(full[y] - z) : 0.0;
  }
  s.hard_label = class_at(pick_with_tiebreak(s.posterior, params.priors));
  return s;
}

std::vector<SilverLabel> predict_silver(const LabelMatrix& matrix, const LabelModelParams& params) {
  if (matrix.lf_names != params.lf_names)
    throw DataError("label matrix columns do not match the fitted labeling functions");
  std::vector<SilverLabel> out;
  out.reserve(matrix.rows());
  for (std::size_t r = 0; r < matrix.rows(); ++r)
    out.push_back(predict_row(matrix.instance_ids[r], matrix.row(r), params));
  return out;
}

void write_params_json(std::ostream& out, const LabelModelParams& p) {
  ordered_json j;
  j["lf_names"] = p.lf_names;
  std::vector<std::string> labels;
  for (auto c : p.lf_labels) labels.emplace_back(to_string(c));
  j["lf_labels"] = labels;
  ordered_json priors;
  for (RefClass c : kAllClasses) priors[std::string(to_string(c))] = p.priors[index_of(c)];
  j["priors"] = priors;
  j["accuracy"] = p.accuracy;
  j["propensity"] = p.propensity;
  j["log_likelihood_trace"] = p.log_likelihood_trace;
  j["iterations"] = p.iterations;
  j["converged"] = p.converged;
  j["max_iter"] = p.options.max_iter;
  j["tol"] = p.options.tol;
  j["seed"] = p.options.seed;
  out << j.dump(2) << '\n';
}

LabelModelParams read_params_json(std::istream& in) {
  try {
    json j = json::parse(in);
    LabelModelParams p;
    p.lf_names = j.at("lf_names").get<std::vector<std::string>>();
    for (const auto& l : j.at("lf_labels")) p.lf_labels.push_back(ref_class_from_string(l.get<std::string>()));
    for (RefClass c : kAllClasses) p.priors[index_of(c)] = j.at("priors").at(std::string(to_string(c))).get<double>();
    p.accuracy = j.at("accuracy").get<std::vector<double>>();
    p.propensity = j.at("propensity").get<std::vector<double>>();
    p.log_likelihood_trace = j.value("log_likelihood_trace", std::vector<double>{});
    p.iterations = j.value("iterations", 0);
    p.converged = j.value("converged", false);
    p.options.max_iter = j.value("max_iter", 100);
    p.options.tol = j.value("tol", 1e-6);
    p.options.seed = j.value("seed", std::uint64_t{42});
    if (p.lf_labels.size() != p.lf_names.size() || p.accuracy.size() != p.lf_names.size() ||
        p.propensity.size() != p.lf_names.size())
      throw DataError("label model parameter arrays differ in length");
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("label model parameters: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Silver files

void write_silver_jsonl(std::ostream& out, std::span<const SilverLabel> silver, const LabelMatrix& matrix) {
  std::map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < matrix.rows(); ++r) row_of[matrix.instance_ids[r]] = r;
  for (const auto& s : silver) {
    ordered_json j;
    j["instance_id"] = s.instance_id;
    j["hard_label"] = std::string(to_string(s.hard_label));
    j["posterior"] = s.posterior;
    ordered_json votes = ordered_json::object();
    if (auto it = row_of.find(s.instance_id); it != row_of.end()) {
      auto row = matrix.row(it->second);
      for (std::size_t c = 0; c < row.size(); ++c)
        if (row[c] != kAbstain) votes[matrix.lf_names[c]] = std::string(to_string(class_at(row[c])));
    }
    j["votes"] = votes;
    j["source"] = s.source == SilverSource::Majority ? "majority" : "label_model";
    out << j.dump() << '\n';
  }
}

std::vector<SilverLabel> read_silver_jsonl(std::istream& in) {
  std::vector<SilverLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      SilverLabel s;
      s.instance_id = j.at("instance_id").get<std::string>();
      s.hard_label = ref_class_from_string(j.at("hard_label").get<std::string>());
      auto post = j.at("posterior").get<std::vector<double>>();
      if (post.size() != kNumClasses) throw DataError("posterior must have 9 entries");
      std::copy(post.begin(), post.end(), s.posterior.begin());
      s.source = j.value("source", "label_model") == "majority" ? SilverSource::Majority : SilverSource::LabelModel;
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw DataError("silver line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

// Indices into `silver` kept per class, each list in input order.
std::array<std::vector<std::size_t>, kNumClasses> sample_per_class(std::span<const SilverLabel> silver,
                                                                  std::size_t cap, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < silver.size(); ++i) by_class[index_of(silver[i].hard_label)].push_back(i);
  Rng rng(seed);
  for (auto& idx : by_class) {
    if (idx.size() <= cap) continue;
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
  }
  return by_class;
}

}  // namespace

std::vector<SilverLabel> downsample(std::span<const SilverLabel> silver, std::size_t cap, std::uint64_t seed) {
  auto by_class = sample_per_class(silver, cap, seed);
  std::vector<std::size_t> keep;
  for (const auto& idx : by_class) keep.insert(keep.end(), idx.begin(), idx.end());
  std::sort(keep.begin(), keep.end());
  std::vector<SilverLabel> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(silver[i]);
  return out;
}

std::vector<ReviewRow> sample_for_review(std::span<const SilverLabel> silver, std::size_t n_per_class,
                                         std::uint64_t seed, const SegmentIndex& segments,
                                         std::size_t context_width) {
  auto by_class = sample_per_class(silver, n_per_class, seed);
  std::vector<ReviewRow> rows;
  for (const auto& idx : by_class) {
    for (auto i : idx) {
      const auto& s = silver[i];
      auto inst = parse_instance_id(s.instance_id);
      if (!inst) throw DataError("malformed instance id '" + s.instance_id + "'");
      const Segment& seg = segments.at(*inst);
      auto window = context_window(*inst, seg, context_width);
      auto forms = [](const std::vector<Token>& tokens) {
        std::vector<std::string> f;
        for (const auto& t : tokens) f.push_back(t.form);
        return join(f, " ");
      };
      rows.push_back({s.hard_label, s.instance_id, s.posterior[index_of(s.hard_label)], forms(window.left),
                      seg.token(inst->flat_token_index).form, forms(window.right)});
    }
  }
  return rows;
}

void write_review_sheet(std::ostream& out, std::span<const ReviewRow> rows) {
  out << "class\tinstance_id\tconfidence\tleft\tpronoun\tright\tverdict\n";
  for (const auto& r : rows) {
    out << to_string(r.label) << '\t' << r.instance_id << '\t' << format_fixed(r.confidence, 3) << '\t' << r.left
        << '\t' << r.pronoun << '\t' << r.right << "\t\n";
  }
}

}  // namespace pronref
