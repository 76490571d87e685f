#include <ostream>

#include "obk/bench.hpp"

namespace obk {

CompareReport compare_backends(const std::filesystem::path& root_base, const WorkloadSpec& spec, SyncMode sync) {
  CompareReport report;
  report.file = run_latency_bench(BackendId::FileStore, root_base / "file", spec, sync);
  report.relational = run_latency_bench(BackendId::RelationalStore, root_base / "relational", spec, sync);
  const auto a = export_canonical(*open_repository(root_base / "file", RepositoryOptions{false, sync}));
  const auto b = export_canonical(*open_repository(root_base / "relational", RepositoryOptions{false, sync}));
  report.exports_equal = a == b;
  report.export_bytes = a.size();
  if (!report.exports_equal) {
    std::size_t pos = 0;
    while (true) {
      const auto ea = a.find('\n', pos);
      const auto eb = b.find('\n', pos);
      const auto la = a.substr(pos, ea == std::string::npos ? std::string::npos : ea - pos);
      const auto lb = b.substr(pos, eb == std::string::npos ? std::string::npos : eb - pos);
      if (la != lb || ea == std::string::npos || eb == std::string::npos) {
        report.first_difference = "file:       " + la + "\nrelational: " + lb;
        break;
      }
      pos = ea + 1;
    }
  }
  return report;
}

void write_compare_csv(const CompareReport& report, std::ostream& out) {
  out << "operation,file_median_us,relational_median_us,file_mean_us,relational_mean_us\n";
  for (const auto& f : report.file.summary) {
    for (const auto& r : report.relational.summary) {
      if (r.op != f.op) continue;
      out << to_string(f.op) << ',' << f.median_us << ',' << r.median_us << ',' << f.mean_us << ',' << r.mean_us
          << '\n';
    }
  }
}

}  // namespace obk
