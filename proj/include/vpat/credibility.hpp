#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace vpat::credibility {

using Series = std::vector<double>;

/// Rows are time samples; columns are named channels such as "car1.x".
struct SeriesMatrix {
  std::string scenario_id;
  double dt = 0.1;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t cols() const { return columns.size(); }
  Series column(std::size_t c) const;
};

struct DtwResult {
  double distance = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> path;
};

/// DTW with steps (1,0), (0,1), (1,1), anchored at both corners. The
/// distance is the square root of the smallest accumulated squared local
/// cost, so the diagonal path of equal-length inputs gives exactly the
/// Euclidean distance.
DtwResult dtw_align(const Series& a, const Series& b);
/// Multichannel form: local cost is the Euclidean distance between rows.
DtwResult dtw_align(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);

/// Expands both inputs to the path length.
std::pair<std::vector<std::vector<double>>, std::vector<std::vector<double>>> warp(
    const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b, const DtwResult& d);

struct PcaResult {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;  // k unit vectors, descending variance
  std::vector<double> explained_variance;       // eigenvalues of the k components
  double total_variance = 0.0;                  // trace of the covariance
  std::vector<std::vector<double>> projected;   // rows x k

  std::vector<std::vector<double>> reconstruct() const;
};

/// Eigen-decomposition of the sample covariance. Each component is signed
/// so its largest-magnitude loading is positive.
PcaResult pca_reduce(const std::vector<std::vector<double>>& rows, std::size_t k);

double pcc(const Series& a, const Series& b);
double rmse(const Series& a, const Series& b);
double tic(const Series& a, const Series& b);

struct FuzzyEnParams {
  std::size_t m = 2;
  double r = 0.2;
  double n = 2.0;
};

/// ln(phi_m) - ln(phi_{m+1}) over all cross template pairs with
/// Chebyshev distance and membership exp(-(d/r)^n). Returns +inf when a
/// similarity sum vanishes.
double cross_fuzzy_en(const Series& a, const Series& b, const FuzzyEnParams& p = {});

/// Hann-windowed periodogram without the DC bin.
Series periodogram(const Series& x);
/// Cosine similarity of the two periodograms.
double cs_psd(const Series& a, const Series& b);

Series standardize(const Series& x);

struct Thresholds {
  double pcc_min = 0.9;
  double tic_max = 0.15;
  double cs_psd_min = 0.95;
  // Extra margin each metric needs before virtual elements may replace physical ones.
  double pcc_slack = 0.05;
  double tic_slack = 0.05;
  double cs_psd_slack = 0.03;
};

struct AssessConfig {
  Thresholds thresholds;
  FuzzyEnParams fuzzy;
};

struct Metrics {
  double pcc = 0.0;
  double rmse = 0.0;
  double tic = 0.0;
  double cross_fuzzy_en = 0.0;
  double cs_psd = 0.0;
};

struct CredibilityReport {
  std::string scenario_id;
  Metrics metrics;
  Thresholds thresholds;
  bool pass = false;
  std::size_t aligned_length = 0;
  std::vector<std::string> channels;  // channels that entered the reduction
  double explained_ratio = 0.0;       // PCA-1 share of variance
};

/// Pair the two matrices on shared channels, standardize with the real
/// statistics, align with multichannel DTW, project both onto the first
/// principal component of the aligned pair, and score.
CredibilityReport assess(const SeriesMatrix& real, const SeriesMatrix& fusion, const AssessConfig& cfg = {});

struct Mix {
  int physical = 0;
  int virtual_count = 0;
  bool saturated = false;
};

Mix recommend_mix(const CredibilityReport& report, Mix current);
bool passes_with_margin(const CredibilityReport& report);

nlohmann::json report_to_json(const CredibilityReport& r);
/// Plain-text table: Scenario, PCC, RMSE, TIC, Cross-FuzzyEn, CS-PSD.
std::string render_table(const std::vector<CredibilityReport>& reports);

}  // namespace vpat::credibility
