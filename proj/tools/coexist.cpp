// Command-line front end: eig | branch | probe | epsilon | verify.
// Every command reads one JSON run configuration and writes deterministic
// outputs. Errors are reported as a JSON object on stderr with exit codes
// 2 (config), 3 (solver), 4 (verification).

#include "coexist/commands.hpp"
#include "coexist/config.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration (JSON)")
      ->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override the config seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--threads", args.threads, "worker threads (0 = auto)");
}

coexist::CmdOptions make_options(const CommonArgs& args) {
  coexist::CmdOptions opt;
  opt.out_dir = args.out_dir;
  if (args.seed_set) opt.seed = args.seed;
  if (args.threads >= 0) opt.threads = args.threads;
  return opt;
}

void print_error(int code, const std::string& message) {
  coexist::json err;
  err["error"] = {{"code", code}, {"message", message}};
  std::cerr << err.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bifurcation analysis toolkit for a nonlocal logistic system"};
  app.require_subcommand(1);

  CommonArgs eig_args, branch_args, probe_args, eps_args, verify_args;
  CLI::App* eig = app.add_subcommand(
      "eig", "print lambda1, lambda*, K, the direction threshold and label");
  add_common(eig, eig_args);
  CLI::App* branch = app.add_subcommand(
      "branch", "trace the coexistence branch; writes branch.csv + report.json");
  add_common(branch, branch_args);
  CLI::App* probe = app.add_subcommand(
      "probe", "multistart solve; writes probe.json");
  add_common(probe, probe_args);
  CLI::App* epsilon = app.add_subcommand(
      "epsilon", "regularized sweep for a(0) = 0; writes epsilon.csv");
  add_common(epsilon, eps_args);
  CLI::App* verify = app.add_subcommand(
      "verify", "solve at one lambda and run the predicate suite");
  add_common(verify, verify_args);

  CLI11_PARSE(app, argc, argv);

  const CommonArgs* args = nullptr;
  if (eig->parsed()) args = &eig_args;
  if (branch->parsed()) args = &branch_args;
  if (probe->parsed()) args = &probe_args;
  if (epsilon->parsed()) args = &eps_args;
  if (verify->parsed()) args = &verify_args;

  try {
    const coexist::RunConfig cfg = coexist::load_config(args->config_path);
    const coexist::CmdOptions opt = make_options(*args);
    if (eig->parsed()) coexist::cmd_eig(cfg, opt, std::cout);
    if (branch->parsed()) coexist::cmd_branch(cfg, opt, std::cout);
    if (probe->parsed()) coexist::cmd_probe(cfg, opt, std::cout);
    if (epsilon->parsed()) coexist::cmd_epsilon(cfg, opt, std::cout);
    if (verify->parsed()) coexist::cmd_verify(cfg, opt, std::cout);
  } catch (const coexist::ConfigError& e) {
    print_error(2, e.what());
    return 2;
  } catch (const coexist::CommandError& e) {
    print_error(e.exit_code, e.what());
    return e.exit_code;
  } catch (const std::invalid_argument& e) {
    print_error(2, e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error(3, e.what());
    return 3;
  }
  return 0;
}
