#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace obk::cli {

struct AcquireOptions {
  std::string listen = "127.0.0.1:7600";
  std::string backend = "file";
  std::string root;
  std::string filter;
  std::string orphan = "reject";
  std::string sync = "buffered";
};

struct CommentOptions {
  std::string root;
  std::string server;
  std::string token;
  std::string partition;
  std::uint64_t run = 0;
  std::string author;
  std::string text;
  std::string origin = "auto";
  std::vector<std::string> attach;
};

struct RunsQueryOptions {
  std::string root;
  std::string status;
  std::optional<std::uint64_t> max_events;
  std::string start_from;
  std::string start_to;
  std::string beam_type;
  std::string trigger_type;
  std::string sort = "run_number";
  std::string dir = "desc";
  bool include_open = false;
  std::string format = "table";
};

struct IsQueryOptions {
  std::string root;
  std::string partition;
  std::string class_name;
  std::string param;
  std::vector<std::string> where;  // OP VALUE
  std::string type;                // forces the VALUE type
  std::string format = "table";
};

struct RunDetailOptions {
  std::string root;
  std::string partition;
  std::uint64_t run = 0;
};

struct UserOptions {
  std::string root;
  std::string username;
  std::string role = "Reader";
  std::string password;
  bool password_stdin = false;
};

struct BenchOptions {
  std::string backend = "file";
  std::string root;
  std::string out_dir;
  std::uint64_t runs = 500;
  std::uint64_t mrs = 10;
  std::uint64_t is = 20;
  std::uint64_t comments = 1;
  std::uint64_t attrs = 4;
  std::uint64_t seed = 1;
  std::string sync = "buffered";
  std::vector<std::uint64_t> publishers{1, 2, 4, 8, 16};
};

// Each returns the process exit code and throws on failure.
int cmd_acquire(const AcquireOptions& o, std::ostream& out);
int cmd_comment(const CommentOptions& o, std::ostream& out);
int cmd_query_runs(const RunsQueryOptions& o, std::ostream& out);
int cmd_query_is(const IsQueryOptions& o, std::ostream& out);
int cmd_query_run(const RunDetailOptions& o, std::ostream& out);
int cmd_admin_init(const std::string& backend, const std::string& root, std::ostream& out);
int cmd_user_add(const UserOptions& o, std::ostream& out);
int cmd_user_passwd(const UserOptions& o, std::ostream& out);
int cmd_user_role(const UserOptions& o, std::ostream& out);
int cmd_force_close(const std::string& root, const std::string& partition, std::uint64_t run, std::ostream& out);
int cmd_export(const std::string& root, const std::string& output, std::ostream& out);
int cmd_serve(const std::string& config, std::ostream& out);
int cmd_bench_latency(const BenchOptions& o, std::ostream& out);
int cmd_bench_scale(const BenchOptions& o, std::ostream& out);
int cmd_bench_compare(const BenchOptions& o, std::ostream& out);

// Wraps a command: obk::Error and other exceptions become "obk: CODE: message" and exit 1.
template <typename F>
int guarded(F&& f);

int report_failure(const std::exception& e);

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return report_failure(e);
  }
}

}  // namespace obk::cli
