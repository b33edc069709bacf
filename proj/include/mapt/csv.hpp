#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapt/matrpo.hpp"
#include "mapt/trpe.hpp"

namespace mapt {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

/// FNV-1a 64-bit; stable fingerprint for run manifests.
inline std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Run logs.
// ---------------------------------------------------------------------------

inline std::string trpe_csv_header(int num_agents) {
  std::string header = "epoch,optimized_kind,mean_zeta1,stderr";
  header += ",joint_entropy,mixture_entropy";
  for (int i = 0; i < num_agents; ++i) header += ",disjoint_entropy_agent_" + std::to_string(i);
  header += ",kl_at_stop,inner_iters,excluded_weights\n";
  return header;
}

inline std::string trpe_log_csv(const std::vector<TrpeEpochRow>& log, const ObjectiveKind& kind,
                                int num_agents) {
  std::string out = trpe_csv_header(num_agents);
  const std::string kind_name =
      kind.variant == ObjectiveKind::Variant::kDisjoint ? "disjoint" : kind.name();
  for (const auto& row : log) {
    out += std::to_string(row.epoch) + ',' + kind_name + ',' +
           format_double(row.metrics.mean_zeta1) + ',' + format_double(row.metrics.stderr_zeta1) +
           ',' + format_double(row.metrics.joint_entropy) + ',' +
           format_double(row.metrics.mixture_entropy);
    for (double h : row.metrics.disjoint_entropy) out += ',' + format_double(h);
    out += ',' + format_double(row.metrics.kl_at_stop) + ',' +
           format_double(row.metrics.inner_iters) + ',' +
           std::to_string(row.metrics.excluded_weights) + '\n';
  }
  return out;
}

inline std::string matrpo_csv_header(int num_agents) {
  std::string header = "epoch";
  for (int i = 0; i < num_agents; ++i) header += ",mean_return_agent_" + std::to_string(i);
  header += ",episodes_to_goal_fraction,kl_at_stop,inner_iters,critic_mse\n";
  return header;
}

inline std::string matrpo_log_csv(const std::vector<MatrpoEpochRow>& log, int num_agents) {
  std::string out = matrpo_csv_header(num_agents);
  for (const auto& row : log) {
    out += std::to_string(row.epoch);
    for (double r : row.metrics.mean_return) out += ',' + format_double(r);
    out += ',' + format_double(row.metrics.goal_fraction) + ',' +
           format_double(row.metrics.kl_at_stop) + ',' +
           format_double(row.metrics.inner_iters) + ',' +
           format_double(row.metrics.critic_mse) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-seed summaries: mean and 95% t-interval half-width per column.
// ---------------------------------------------------------------------------

/// Two-sided 97.5% Student-t quantile by degrees of freedom.
inline double t_quantile_975(int dof) {
  static constexpr double kTable[] = {0,     12.706, 4.303, 3.182, 2.776, 2.571, 2.447,
                                      2.365, 2.306,  2.262, 2.228, 2.201, 2.179, 2.160,
                                      2.145, 2.131,  2.120, 2.110, 2.101, 2.093, 2.086,
                                      2.080, 2.074,  2.069, 2.064, 2.060, 2.056, 2.052,
                                      2.048, 2.045,  2.042};
  if (dof < 1) throw std::invalid_argument("t_quantile_975: dof must be >= 1");
  if (dof <= 30) return kTable[dof];
  return 1.96;
}

struct MeanCi {
  double mean = 0.0;
  double ci95 = 0.0;  // half-width
};

inline MeanCi mean_ci95(std::span<const double> values) {
  MeanCi out;
  const int n = static_cast<int>(values.size());
  if (n == 0) return out;
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double stderr_mean = std::sqrt(ss / (n - 1) / n);
    out.ci95 = t_quantile_975(n - 1) * stderr_mean;
  }
  return out;
}

/// Per-epoch cross-seed summary of TRPE logs (all runs must share an epoch
/// grid). Columns carry the mean and 95% CI half-width of each logged metric.
inline std::string trpe_summary_csv(const std::vector<std::vector<TrpeEpochRow>>& logs,
                                    int num_agents) {
  std::string out = "epoch,mean_zeta1,mean_zeta1_ci95,joint_entropy,joint_entropy_ci95,"
                    "mixture_entropy,mixture_entropy_ci95";
  for (int i = 0; i < num_agents; ++i) {
    const std::string col = "disjoint_entropy_agent_" + std::to_string(i);
    out += ',' + col + ',' + col + "_ci95";
  }
  out += '\n';
  if (logs.empty()) return out;
  const std::size_t epochs = logs.front().size();
  for (const auto& log : logs)
    if (log.size() != epochs)
      throw std::invalid_argument("trpe_summary_csv: seed logs have different epoch counts");
  std::vector<double> column(logs.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    out += std::to_string(logs.front()[e].epoch);
    auto append = [&](auto getter) {
      for (std::size_t s = 0; s < logs.size(); ++s) column[s] = getter(logs[s][e].metrics);
      const MeanCi mc = mean_ci95(column);
      out += ',' + format_double(mc.mean) + ',' + format_double(mc.ci95);
    };
    append([](const TrpeEpochMetrics& m) { return m.mean_zeta1; });
    append([](const TrpeEpochMetrics& m) { return m.joint_entropy; });
    append([](const TrpeEpochMetrics& m) { return m.mixture_entropy; });
    for (int i = 0; i < num_agents; ++i)
      append([i](const TrpeEpochMetrics& m) { return m.disjoint_entropy[i]; });
    out += '\n';
  }
  return out;
}

inline std::string matrpo_summary_csv(const std::vector<std::vector<MatrpoEpochRow>>& logs,
                                      int num_agents) {
  std::string out = "epoch";
  for (int i = 0; i < num_agents; ++i) {
    const std::string col = "mean_return_agent_" + std::to_string(i);
    out += ',' + col + ',' + col + "_ci95";
  }
  out += ",episodes_to_goal_fraction,episodes_to_goal_fraction_ci95\n";
  if (logs.empty()) return out;
  const std::size_t epochs = logs.front().size();
  for (const auto& log : logs)
    if (log.size() != epochs)
      throw std::invalid_argument("matrpo_summary_csv: seed logs have different epoch counts");
  std::vector<double> column(logs.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    out += std::to_string(logs.front()[e].epoch);
    auto append = [&](auto getter) {
      for (std::size_t s = 0; s < logs.size(); ++s) column[s] = getter(logs[s][e].metrics);
      const MeanCi mc = mean_ci95(column);
      out += ',' + format_double(mc.mean) + ',' + format_double(mc.ci95);
    };
    for (int i = 0; i < num_agents; ++i)
      append([i](const MatrpoEpochMetrics& m) { return m.mean_return[i]; });
    append([](const MatrpoEpochMetrics& m) { return m.goal_fraction; });
    out += '\n';
  }
  return out;
}

}  // namespace mapt
