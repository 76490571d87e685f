#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace obk::cli;

namespace {

void add_bench_options(CLI::App* cmd, BenchOptions& o, bool with_backend) {
  if (with_backend) cmd->add_option("--backend", o.backend, "file or relational")->capture_default_str();
  cmd->add_option("--root", o.root, "Scratch directory for the benchmark repositories")->required();
  cmd->add_option("--out", o.out_dir, "Directory for CSV output (default: current directory)");
  cmd->add_option("--runs", o.runs, "Runs per publisher")->capture_default_str();
  cmd->add_option("--mrs", o.mrs, "MRS messages per run")->capture_default_str();
  cmd->add_option("--is", o.is, "IS updates per run")->capture_default_str();
  cmd->add_option("--comments", o.comments, "Comments per run")->capture_default_str();
  cmd->add_option("--attrs", o.attrs, "Attributes per IS object")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Workload seed")->capture_default_str();
  cmd->add_option("--sync", o.sync, "buffered or durable")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"obk: run bookkeeping"};
  app.require_subcommand(1);
  int rc = 0;

  AcquireOptions acq;
  auto* acquire = app.add_subcommand("acquire", "Run the acquisition server");
  acquire->add_option("--listen", acq.listen, "host:port")->capture_default_str();
  acquire->add_option("--backend", acq.backend, "file or relational (used when creating)")->capture_default_str();
  acquire->add_option("--root", acq.root, "Repository root")->required();
  acquire->add_option("--filter", acq.filter, "Subscription filter JSON file");
  acquire->add_option("--orphan", acq.orphan, "reject or store")->capture_default_str();
  acquire->add_option("--sync", acq.sync, "buffered or durable")->capture_default_str();
  acquire->callback([&] { rc = guarded([&] { return cmd_acquire(acq, std::cout); }); });

  CommentOptions com;
  auto* comment = app.add_subcommand("comment", "Add a comment to a run");
  auto* root_opt = comment->add_option("--root", com.root, "Repository root (offline mode)");
  auto* server_opt = comment->add_option("--server", com.server, "Service URL (online mode)")->envname("OBK_SERVER");
  comment->add_option("--token", com.token, "Bearer token (online mode)")->envname("OBK_TOKEN");
  root_opt->excludes(server_opt);
  comment->add_option("--partition", com.partition, "Partition")->required();
  comment->add_option("--run", com.run, "Run number")->required();
  comment->add_option("--author", com.author, "Author (required offline)");
  comment->add_option("--text", com.text, "Comment text");
  comment->add_option("--attach", com.attach, "File to attach (repeatable)");
  comment->add_option("--origin", com.origin, "auto, Online, Offline or Web")->capture_default_str();
  comment->callback([&] { rc = guarded([&] { return cmd_comment(com, std::cout); }); });

  auto* query = app.add_subcommand("query", "Search the repository");
  query->require_subcommand(1);

  RunsQueryOptions rq;
  std::uint64_t max_events = 0;
  auto* runs = query->add_subcommand("runs", "Search runs");
  runs->add_option("--root", rq.root, "Repository root")->required();
  runs->add_option("--status", rq.status, "Good or Bad");
  auto* max_opt = runs->add_option("--max-events", max_events, "Only runs with max_events at most this");
  runs->add_option("--start-from", rq.start_from, "Earliest start time (inclusive, ISO UTC)");
  runs->add_option("--start-to", rq.start_to, "Latest start time (inclusive, ISO UTC)");
  runs->add_option("--beam", rq.beam_type, "Beam type (case-insensitive)");
  runs->add_option("--trigger", rq.trigger_type, "Trigger type");
  runs->add_option("--sort", rq.sort, "run_number, start_time or num_events")->capture_default_str();
  runs->add_option("--dir", rq.dir, "asc or desc")->capture_default_str();
  runs->add_flag("--include-open", rq.include_open, "Include open runs");
  runs->add_option("--format", rq.format, "table, json or csv")->capture_default_str();
  runs->callback([&] {
    if (*max_opt) rq.max_events = max_events;
    rc = guarded([&] { return cmd_query_runs(rq, std::cout); });
  });

  IsQueryOptions iq;
  auto* is = query->add_subcommand("is", "Find IS attribute values");
  is->add_option("--root", iq.root, "Repository root")->required();
  is->add_option("--class", iq.class_name, "IS class")->required();
  is->add_option("--param", iq.param, "Attribute name")->required();
  is->add_option("--where", iq.where, "OP VALUE with OP one of =, <, >, contains")->expected(2);
  is->add_option("--type", iq.type, "Force the type of the --where value (int, float, bool, str, time)");
  is->add_option("--partition", iq.partition, "Restrict to one partition");
  is->add_option("--format", iq.format, "table, json or csv")->capture_default_str();
  is->callback([&] { rc = guarded([&] { return cmd_query_is(iq, std::cout); }); });

  RunDetailOptions rd;
  auto* run = query->add_subcommand("run", "Print one run with all its records as JSON");
  run->add_option("--root", rd.root, "Repository root")->required();
  run->add_option("--partition", rd.partition, "Partition")->required();
  run->add_option("--run", rd.run, "Run number")->required();
  run->callback([&] { rc = guarded([&] { return cmd_query_run(rd, std::cout); }); });

  auto* admin = app.add_subcommand("admin", "Repository administration");
  admin->require_subcommand(1);

  std::string init_backend, init_root;
  auto* init = admin->add_subcommand("init", "Create an empty repository");
  init->add_option("--backend", init_backend, "file or relational")->required();
  init->add_option("--root", init_root, "Repository root")->required();
  init->callback([&] { rc = guarded([&] { return cmd_admin_init(init_backend, init_root, std::cout); }); });

  UserOptions uo;
  auto* user = admin->add_subcommand("user", "Manage user accounts");
  user->require_subcommand(1);
  auto user_common = [&](CLI::App* c, bool password, bool role) {
    c->add_option("--root", uo.root, "Repository root")->required();
    c->add_option("username", uo.username, "User name")->required();
    if (password) {
      auto* p = c->add_option("--password", uo.password, "Password");
      auto* s = c->add_flag("--password-stdin", uo.password_stdin, "Read the password from stdin");
      p->excludes(s);
    }
    if (role) c->add_option("--role", uo.role, "Reader, Writer or Admin")->capture_default_str();
  };
  auto* add = user->add_subcommand("add", "Create a user");
  user_common(add, true, true);
  add->callback([&] { rc = guarded([&] { return cmd_user_add(uo, std::cout); }); });
  auto* passwd = user->add_subcommand("passwd", "Change a password");
  user_common(passwd, true, false);
  passwd->callback([&] { rc = guarded([&] { return cmd_user_passwd(uo, std::cout); }); });
  auto* role = user->add_subcommand("role", "Change a role");
  user_common(role, false, true);
  role->callback([&] { rc = guarded([&] { return cmd_user_role(uo, std::cout); }); });

  std::string fc_root, fc_partition;
  std::uint64_t fc_run = 0;
  auto* force = admin->add_subcommand("force-close", "Close a dangling open run as Bad");
  force->add_option("--root", fc_root, "Repository root")->required();
  force->add_option("--partition", fc_partition, "Partition")->required();
  force->add_option("--run", fc_run, "Run number")->required();
  force->callback([&] { rc = guarded([&] { return cmd_force_close(fc_root, fc_partition, fc_run, std::cout); }); });

  std::string ex_root, ex_out;
  auto* exp = admin->add_subcommand("export", "Write the canonical export");
  exp->add_option("--root", ex_root, "Repository root")->required();
  exp->add_option("--output,-o", ex_out, "Output file (default stdout)");
  exp->callback([&] { rc = guarded([&] { return cmd_export(ex_root, ex_out, std::cout); }); });

  std::string config;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--config", config, "Service configuration JSON")->required();
  serve->callback([&] { rc = guarded([&] { return cmd_serve(config, std::cout); }); });

  auto* bench = app.add_subcommand("bench", "Storage benchmarks");
  bench->require_subcommand(1);
  BenchOptions lat_o, scale_o, cmp_o;
  auto* lat = bench->add_subcommand("latency", "Per-operation store latency over many runs");
  add_bench_options(lat, lat_o, true);
  lat->callback([&] { rc = guarded([&] { return cmd_bench_latency(lat_o, std::cout); }); });
  auto* scale = bench->add_subcommand("scale", "IS store latency against concurrent publishers");
  scale_o.runs = 50;
  add_bench_options(scale, scale_o, true);
  scale->add_option("--publishers", scale_o.publishers, "Publisher counts")->delimiter(',')->capture_default_str();
  scale->callback([&] { rc = guarded([&] { return cmd_bench_scale(scale_o, std::cout); }); });
  auto* cmp = bench->add_subcommand("compare", "Run the latency bench on both backends and compare exports");
  add_bench_options(cmp, cmp_o, false);
  cmp->callback([&] { rc = guarded([&] { return cmd_bench_compare(cmp_o, std::cout); }); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return rc;
}
