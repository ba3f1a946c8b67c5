#ifndef RISV_IO_HPP
#define RISV_IO_HPP

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "paths.hpp"

namespace risv {

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

inline void csv_preamble(std::ostream& out, const std::string& hash, const std::vector<std::string>& header) {
  out << "# config_hash: " << hash << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
}

inline std::vector<std::string> column_names(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i + 1));
  return names;
}

} // namespace detail

/// Generic table: one `# config_hash` line, the header, then one line per row.
inline void write_csv(const std::filesystem::path& p, const std::string& hash, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out = detail::open_output(p);
  detail::csv_preamble(out, hash, header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw DimensionError("write_csv: row width differs from the header");
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

/// Columns t, z1..zn, v1..vn, l1..ln.
inline void write_state_csv(const std::filesystem::path& p, const std::string& hash, const StatePath& z,
                            const LoadPath& ell) {
  const Eigen::Index n = z.n();
  std::vector<std::string> header{"t"};
  for (const char* pre : {"z", "v", "l"}) {
    const auto names = detail::column_names(pre, n);
    header.insert(header.end(), names.begin(), names.end());
  }
  std::vector<std::vector<double>> rows;
  for (Eigen::Index k = 0; k < z.grid().nodes(); ++k) {
    std::vector<double> r{z.grid().t(k)};
    for (Eigen::Index i = 0; i < n; ++i) r.push_back(z.values()(i, k));
    for (Eigen::Index i = 0; i < n; ++i) r.push_back(z.velocities()(i, k));
    for (Eigen::Index i = 0; i < n; ++i) r.push_back(ell.values()(i, k));
    rows.push_back(std::move(r));
  }
  write_csv(p, hash, header, rows);
}

/// Pretty JSON with `config_hash` added at the top level.
inline void write_json(const std::filesystem::path& p, const std::string& hash, nlohmann::json report) {
  report["config_hash"] = hash;
  std::ofstream out = detail::open_output(p);
  out << report.dump(2) << '\n';
}

} // namespace risv

#endif // RISV_IO_HPP
