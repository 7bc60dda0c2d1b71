#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rcm/app/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Random connection model simulator"};
  app.require_subcommand(1);

  rcm::app::Invocation inv;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 0;

  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", inv.config_path, "Config file (key = value lines)")->required();
    sub->add_option("--seed", seed, "Override sim.seed");
    sub->add_option("--out", out, "Override out.directory");
    sub->add_option("--threads", threads, "Override sim.threads")->check(CLI::Range(1u, 1024u));
    return sub;
  };
  add("explore", "Lazy cluster explorations from a root at the origin");
  add("sweep", "Box simulations over an intensity grid and box sizes");
  add("bounds", "Lower bounds on t_T, Delta_n(t), certificates and mean-field curves");
  add("check", "Identity, domination, edge-bound and magnetization checks");
  auto* fit = add("fit", "Exponential tail fits of cluster sizes and diameters");
  fit->add_option("--input", inv.inputs, "clusters.csv files written by explore")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : rcm::app::kConfigError;
  }

  inv.command = app.get_subcommands().front()->get_name();
  const auto* sub = app.get_subcommands().front();
  if (sub->count("--seed")) inv.overrides.seed = seed;
  if (sub->count("--out")) inv.overrides.out = out;
  if (sub->count("--threads")) inv.overrides.threads = threads;
  return rcm::app::run(inv, std::cout, std::cerr);
}
