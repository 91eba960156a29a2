#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfmesc/esc.hpp"
#include "gfmesc/harness.hpp"
#include "gfmesc/metrics.hpp"
#include "gfmesc/simulator.hpp"

namespace gfmesc::csv {

// %.9g: nine significant digits, locale independent for the C locale.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_trajectory(std::ostream& os, const FrequencyTrajectory& traj) {
  os << "t,f_hz,df_hz";
  for (const std::string& label : traj.device_labels) os << ',' << label;
  os << '\n';
  for (std::size_t i = 0; i < traj.size(); ++i) {
    os << num(traj.time(i)) << ',' << num(traj.f_hz[i]) << ',' << num(traj.deviation(i));
    for (const auto& column : traj.device_hz) os << ',' << num(column[i]);
    os << '\n';
  }
}

inline const char* metrics_header() { return "droop,e_avg,r_mean,r_max,f_final,j_total"; }

inline void write_metrics_row(std::ostream& os, double droop, const PerformanceMetrics& m,
                              double cost) {
  os << num(droop) << ',' << num(m.e_avg) << ',' << num(m.r_mean) << ',' << num(m.r_max) << ','
     << num(m.f_final) << ',' << num(cost) << '\n';
}

inline void write_sweep(std::ostream& os, const std::vector<SweepPoint>& points) {
  os << metrics_header() << '\n';
  for (const SweepPoint& p : points) {
    if (p.ok()) write_metrics_row(os, p.droop, *p.metrics, p.cost);
  }
}

inline void write_trace(std::ostream& os, const EscTrace& trace) {
  os << "iter,droop,cost,epsilon,dwell\n";
  for (const EscTraceRow& r : trace.rows) {
    os << r.iteration << ',' << num(r.droop) << ',' << num(r.cost) << ',' << r.epsilon << ','
       << num(r.dwell) << '\n';
  }
}

// Case traces carry the segment index and that segment's sweep argmin.
inline void write_case_trace(std::ostream& os, const CaseResult& result) {
  os << "iter,droop,cost,epsilon,dwell,segment,ref_argmin\n";
  for (std::size_t i = 0; i < result.trace.rows.size(); ++i) {
    const EscTraceRow& r = result.trace.rows[i];
    const std::size_t seg = result.row_segment[i];
    const auto& ref = result.segment_argmin.at(seg);
    os << r.iteration << ',' << num(r.droop) << ',' << num(r.cost) << ',' << r.epsilon << ','
       << num(r.dwell) << ',' << seg << ',' << (ref ? num(*ref) : std::string{}) << '\n';
  }
}

struct Failure {
  std::string artifact;
  std::string where;
  std::string message;
};

inline void write_failures(std::ostream& os, const std::vector<Failure>& failures) {
  os << "artifact,where,message\n";
  for (const Failure& f : failures) {
    std::string msg = f.message;
    for (char& c : msg)
      if (c == ',' || c == '\n') c = ';';
    os << f.artifact << ',' << f.where << ',' << msg << '\n';
  }
}

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  writer(os);
}

}  // namespace gfmesc::csv
