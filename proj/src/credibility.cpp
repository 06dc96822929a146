#include "vpat/credibility.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "vpat/error.hpp"

namespace vpat::credibility {

using nlohmann::json;
using Rows = std::vector<std::vector<double>>;

Series SeriesMatrix::column(std::size_t c) const {
  Series out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(c));
  return out;
}

// ---------------------------------------------------------------------------
// DTW

namespace {

template <typename Cost>
DtwResult dtw_core(std::size_t n, std::size_t m, Cost cost) {
  if (n == 0 || m == 0) throw Error(ErrorCode::kEmptyInput, "DTW needs two nonempty series");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> acc((n + 1) * (m + 1), kInf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * (m + 1) + j]; };
  at(0, 0) = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const double best = std::min({at(i - 1, j - 1), at(i - 1, j), at(i, j - 1)});
      at(i, j) = cost(i - 1, j - 1) + best;
    }
  }
  DtwResult r;
  r.distance = std::sqrt(at(n, m));
  std::size_t i = n, j = m;
  while (i > 0 && j > 0) {
    r.path.emplace_back(i - 1, j - 1);
    if (i == 1 && j == 1) break;
    const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(r.path.begin(), r.path.end());
  return r;
}

}  // namespace

DtwResult dtw_align(const Series& a, const Series& b) {
  return dtw_core(a.size(), b.size(), [&](std::size_t i, std::size_t j) {
    const double d = a[i] - b[j];
    return d * d;
  });
}

DtwResult dtw_align(const Rows& a, const Rows& b) {
  return dtw_core(a.size(), b.size(), [&](std::size_t i, std::size_t j) {
    if (a[i].size() != b[j].size()) throw Error(ErrorCode::kLengthMismatch, "DTW rows differ in width");
    double s = 0.0;
    for (std::size_t c = 0; c < a[i].size(); ++c) {
      const double d = a[i][c] - b[j][c];
      s += d * d;
    }
    return s;
  });
}

std::pair<Rows, Rows> warp(const Rows& a, const Rows& b, const DtwResult& d) {
  Rows wa, wb;
  wa.reserve(d.path.size());
  wb.reserve(d.path.size());
  for (const auto& [i, j] : d.path) {
    wa.push_back(a.at(i));
    wb.push_back(b.at(j));
  }
  return {wa, wb};
}

// ---------------------------------------------------------------------------
// PCA

Rows PcaResult::reconstruct() const {
  Rows out;
  for (const auto& p : projected) {
    std::vector<double> row = mean;
    for (std::size_t k = 0; k < components.size(); ++k) {
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += p[k] * components[k][c];
    }
    out.push_back(row);
  }
  return out;
}

PcaResult pca_reduce(const Rows& rows, std::size_t k) {
  if (rows.size() < 2) throw Error(ErrorCode::kTooShort, "PCA needs at least two rows");
  const std::size_t cols = rows.front().size();
  if (k == 0 || k > cols) throw Error(ErrorCode::kConfig, "PCA k must be in [1, columns]");
  Eigen::MatrixXd x(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw Error(ErrorCode::kLengthMismatch, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) x(r, c) = rows[r][c];
  }
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - mu;
  const Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(rows.size() - 1);
  PcaResult out;
  out.total_variance = cov.trace();
  if (!(out.total_variance > 0.0)) throw Error(ErrorCode::kDegenerate, "zero-variance matrix");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::kDegenerate, "eigen-decomposition failed");
  const Eigen::VectorXd values = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd vectors = solver.eigenvectors();

  out.mean.assign(mu.data(), mu.data() + cols);
  Eigen::MatrixXd basis(cols, k);
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::Index src = static_cast<Eigen::Index>(cols - 1 - i);
    Eigen::VectorXd v = vectors.col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    basis.col(static_cast<Eigen::Index>(i)) = v;
    out.components.emplace_back(v.data(), v.data() + cols);
    out.explained_variance.push_back(values(src));
  }
  const Eigen::MatrixXd proj = xc * basis;
  out.projected.resize(rows.size(), std::vector<double>(k));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < k; ++i) out.projected[r][i] = proj(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Point metrics

namespace {

void same_length(const Series& a, const Series& b, std::size_t min_len) {
  if (a.size() != b.size()) throw Error(ErrorCode::kLengthMismatch, "series lengths differ");
  if (a.size() < min_len) {
    throw Error(ErrorCode::kTooShort, "series shorter than " + std::to_string(min_len));
  }
}

double mean(const Series& x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

}  // namespace

double pcc(const Series& a, const Series& b) {
  same_length(a, b, 2);
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(ErrorCode::kUndefined, "correlation of a constant series");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double rmse(const Series& a, const Series& b) {
  same_length(a, b, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

double tic(const Series& a, const Series& b) {
  same_length(a, b, 1);
  double qa = 0.0, qb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    qa += a[i] * a[i];
    qb += b[i] * b[i];
  }
  const double n = static_cast<double>(a.size());
  const double denom = std::sqrt(qa / n) + std::sqrt(qb / n);
  if (!(denom > 0.0)) throw Error(ErrorCode::kUndefined, "TIC of two all-zero series");
  return std::clamp(rmse(a, b) / denom, 0.0, 1.0);
}

Series standardize(const Series& x) {
  if (x.empty()) throw Error(ErrorCode::kEmptyInput, "cannot standardize an empty series");
  const double mu = mean(x);
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  if (!(var > 0.0)) throw Error(ErrorCode::kDegenerate, "cannot standardize a constant series");
  const double sd = std::sqrt(var);
  Series out;
  out.reserve(x.size());
  for (double v : x) out.push_back((v - mu) / sd);
  return out;
}

double cross_fuzzy_en(const Series& a, const Series& b, const FuzzyEnParams& p) {
  if (a.size() != b.size()) throw Error(ErrorCode::kLengthMismatch, "series lengths differ");
  if (p.m == 0 || !(p.r > 0.0) || !(p.n > 0.0)) throw Error(ErrorCode::kConfig, "bad fuzzy entropy parameters");
  if (a.size() < p.m + 2) throw Error(ErrorCode::kTooShort, "series shorter than m + 2");
  const std::size_t count = a.size() - p.m;
  auto phi = [&](std::size_t len) {
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < count; ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < len; ++k) d = std::max(d, std::abs(a[i + k] - b[j + k]));
        sum += std::exp(-std::pow(d / p.r, p.n));
      }
    }
    return sum / (static_cast<double>(count) * static_cast<double>(count));
  };
  const double phi_m = phi(p.m);
  const double phi_m1 = phi(p.m + 1);
  if (!(phi_m > 0.0) || !(phi_m1 > 0.0)) return std::numeric_limits<double>::infinity();
  return std::log(phi_m) - std::log(phi_m1);
}

Series periodogram(const Series& x) {
  const std::size_t n = x.size();
  if (n < 2) throw Error(ErrorCode::kTooShort, "periodogram needs at least two samples");
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  const double pi = std::acos(-1.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(k) / static_cast<double>(n - 1));
    in[k] = w * x[k];
  }
  fftw_execute(plan);
  Series p;
  p.reserve(n / 2);
  for (std::size_t k = 1; k <= n / 2; ++k) p.push_back(out[k][0] * out[k][0] + out[k][1] * out[k][1]);
  fftw_destroy_plan(plan);
  fftw_free(out);
  fftw_free(in);
  return p;
}

double cs_psd(const Series& a, const Series& b) {
  same_length(a, b, 8);
  const Series pa = periodogram(a), pb = periodogram(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    dot += pa[k] * pb[k];
    na += pa[k] * pa[k];
    nb += pb[k] * pb[k];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw Error(ErrorCode::kUndefined, "zero power spectrum");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Pipeline

CredibilityReport assess(const SeriesMatrix& real, const SeriesMatrix& fusion, const AssessConfig& cfg) {
  if (real.scenario_id != fusion.scenario_id) {
    throw Error(ErrorCode::kMismatch, "scenario ids differ: '" + real.scenario_id + "' vs '" + fusion.scenario_id + "'");
  }
  if (real.rows.size() < 2 || fusion.rows.size() < 2) throw Error(ErrorCode::kTooShort, "logs need at least two samples");

  std::map<std::string, std::size_t> fusion_col;
  for (std::size_t c = 0; c < fusion.columns.size(); ++c) fusion_col[fusion.columns[c]] = c;

  struct Channel {
    std::string name;
    std::size_t real_col;
    std::size_t fusion_col;
    double mu;
    double sd;
  };
  std::vector<Channel> channels;
  for (std::size_t c = 0; c < real.columns.size(); ++c) {
    auto it = fusion_col.find(real.columns[c]);
    if (it == fusion_col.end()) continue;
    const Series col = real.column(c);
    const double mu = mean(col);
    double var = 0.0;
    for (double v : col) var += (v - mu) * (v - mu);
    var /= static_cast<double>(col.size());
    if (!(var > 0.0)) continue;
    channels.push_back({real.columns[c], c, it->second, mu, std::sqrt(var)});
  }
  if (channels.empty()) throw Error(ErrorCode::kDegenerate, "no shared channel with variance");

  auto scaled = [&](const SeriesMatrix& m, bool is_real) {
    Rows out;
    out.reserve(m.rows.size());
    for (const auto& row : m.rows) {
      std::vector<double> r;
      r.reserve(channels.size());
      for (const auto& ch : channels) r.push_back((row.at(is_real ? ch.real_col : ch.fusion_col) - ch.mu) / ch.sd);
      out.push_back(std::move(r));
    }
    return out;
  };
  const Rows a = scaled(real, true);
  const Rows b = scaled(fusion, false);
  const DtwResult d = dtw_align(a, b);
  auto [wa, wb] = warp(a, b, d);

  Rows stacked = wa;
  stacked.insert(stacked.end(), wb.begin(), wb.end());
  const PcaResult pca = pca_reduce(stacked, 1);
  const std::size_t len = wa.size();
  Series pa(len), pb(len);
  for (std::size_t i = 0; i < len; ++i) {
    pa[i] = pca.projected[i][0];
    pb[i] = pca.projected[len + i][0];
  }

  CredibilityReport r;
  r.scenario_id = real.scenario_id;
  r.thresholds = cfg.thresholds;
  r.aligned_length = len;
  for (const auto& ch : channels) r.channels.push_back(ch.name);
  r.explained_ratio = pca.explained_variance[0] / pca.total_variance;
  r.metrics.pcc = pcc(pa, pb);
  r.metrics.rmse = rmse(pa, pb);
  r.metrics.tic = tic(pa, pb);
  r.metrics.cross_fuzzy_en = cross_fuzzy_en(standardize(pa), standardize(pb), cfg.fuzzy);
  r.metrics.cs_psd = cs_psd(pa, pb);
  const Thresholds& t = cfg.thresholds;
  r.pass = r.metrics.pcc >= t.pcc_min && r.metrics.tic <= t.tic_max && r.metrics.cs_psd >= t.cs_psd_min;
  return r;
}

bool passes_with_margin(const CredibilityReport& r) {
  const Thresholds& t = r.thresholds;
  return r.pass && r.metrics.pcc >= t.pcc_min + t.pcc_slack && r.metrics.tic <= t.tic_max - t.tic_slack &&
         r.metrics.cs_psd >= t.cs_psd_min + t.cs_psd_slack;
}

Mix recommend_mix(const CredibilityReport& report, Mix current) {
  if (current.physical < 0 || current.virtual_count < 0) throw Error(ErrorCode::kConfig, "element counts must be >= 0");
  Mix next = current;
  next.saturated = false;
  if (!report.pass) {
    if (current.virtual_count > 0) {
      ++next.physical;
      --next.virtual_count;
    } else {
      next.saturated = true;
    }
  } else if (passes_with_margin(report)) {
    if (current.physical > 0) {
      --next.physical;
      ++next.virtual_count;
    } else {
      next.saturated = true;
    }
  }
  return next;
}

json report_to_json(const CredibilityReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json("inf"); };
  return {{"scenario_id", r.scenario_id},
          {"metrics",
           {{"pcc", num(r.metrics.pcc)},
            {"rmse", num(r.metrics.rmse)},
            {"tic", num(r.metrics.tic)},
            {"cross_fuzzy_en", num(r.metrics.cross_fuzzy_en)},
            {"cs_psd", num(r.metrics.cs_psd)}}},
          {"thresholds",
           {{"pcc_min", r.thresholds.pcc_min}, {"tic_max", r.thresholds.tic_max}, {"cs_psd_min", r.thresholds.cs_psd_min}}},
          {"verdict", r.pass ? "pass" : "fail"},
          {"aligned_length", r.aligned_length},
          {"channels", r.channels},
          {"pca1_explained_ratio", r.explained_ratio}};
}

std::string render_table(const std::vector<CredibilityReport>& reports) {
  std::ostringstream os;
  os << std::left << std::setw(26) << "Scenario" << std::right << std::setw(9) << "PCC" << std::setw(9) << "RMSE"
     << std::setw(9) << "TIC" << std::setw(15) << "Cross-FuzzyEn" << std::setw(9) << "CS-PSD" << "  Verdict\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& r : reports) {
    os << std::left << std::setw(26) << r.scenario_id << std::right << std::setw(9) << r.metrics.pcc << std::setw(9)
       << r.metrics.rmse << std::setw(9) << r.metrics.tic << std::setw(15) << r.metrics.cross_fuzzy_en << std::setw(9)
       << r.metrics.cs_psd << "  " << (r.pass ? "pass" : "fail") << "\n";
  }
  return os.str();
}

}  // namespace vpat::credibility
