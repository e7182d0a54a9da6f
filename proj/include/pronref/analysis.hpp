#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pronref/corpus.hpp"
#include "pronref/refclass.hpp"

namespace pronref {

/// Per-group class rates per 1000 tokens, with the raw counts.
struct ProfileMatrix {
  GroupBy group_by = GroupBy::Speaker;
  std::vector<std::string> groups;  // sorted
  std::vector<std::size_t> tokens;
  std::vector<ClassCounts> counts;
  std::vector<ClassVector> rates;
};

/// Token totals come from every segment; counts from the labeled instances.
ProfileMatrix build_profiles(const std::map<std::string, RefClass>& gold, std::span<const Segment> segments,
                             GroupBy group_by);

void write_profiles_csv(std::ostream& out, const ProfileMatrix& profiles);

struct PCAResult {
  std::vector<std::string> variables;  // retained input columns
  std::vector<double> means;
  std::vector<double> scales;  // 1 unless standardized
  /// Unit-norm principal directions, one per row, by descending eigenvalue.
  std::vector<std::vector<double>> components;
  std::vector<double> eigenvalues;
  std::vector<double> explained_variance_ratio;
  /// loadings[i] = components[i] * sqrt(eigenvalues[i]).
  std::vector<std::vector<double>> loadings;
  /// scores[r][i]: projection of row r on component i.
  std::vector<std::vector<double>> scores;
};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (unsorted) and eigenvectors as columns of `vectors`.
void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& values,
                  std::vector<std::vector<double>>& vectors);

/// Principal components of the sample covariance of `rows`. Each component
/// is signed so that its largest-magnitude entry is positive.
PCAResult pca(const std::vector<std::vector<double>>& rows, const std::vector<std::string>& variables,
              bool standardize);
PCAResult pca(const ProfileMatrix& profiles, bool standardize);

void write_loadings_csv(std::ostream& out, const PCAResult& result);
void write_scores_csv(std::ostream& out, const PCAResult& result, std::span<const std::string> row_labels);
void write_eigenvalues_csv(std::ostream& out, const PCAResult& result);

/// PC1/PC2 biplot: one point per row and one arrow per variable.
std::string biplot_svg(const PCAResult& result, std::span<const std::string> row_labels);
void emit_biplot(const PCAResult& result, std::span<const std::string> row_labels, const std::filesystem::path& path);

}  // namespace pronref
