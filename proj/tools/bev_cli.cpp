// Command-line front end for the blade envelope pipeline. Talks to the
// shared library through the C API only.

#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "bladeenvelopes.h"

namespace {

struct Options {
  std::string config;
  std::string out = "run";
  std::string stage;
  std::string profile;
  std::string mesh_out;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
};

int fail(bev_status st) {
  std::fprintf(stderr, "error: %s\n", bev_last_error());
  return static_cast<int>(st);
}

int run_verb(const Options& opt, const char* through_stage, bool classify,
             bool mesh, bool plots) {
  bev_pipeline* p = nullptr;
  bev_status st = bev_pipeline_open(opt.config.c_str(), opt.out.c_str(), &p);
  if (st != BEV_OK) return fail(st);

  if (opt.has_seed_override) {
    st = bev_pipeline_seed_override(p, opt.seed_override);
    if (st != BEV_OK) {
      bev_pipeline_close(p);
      return fail(st);
    }
  }
  if (!opt.stage.empty()) {
    st = bev_pipeline_invalidate_from(p, opt.stage.c_str());
    if (st != BEV_OK) {
      bev_pipeline_close(p);
      return fail(st);
    }
  }

  if (through_stage || (!classify && !mesh && !plots)) {
    st = bev_pipeline_run(p, through_stage);
    if (st != BEV_OK) {
      bev_pipeline_close(p);
      return fail(st);
    }
  }

  if (classify) {
    // Classification needs a trained decision model.
    st = bev_pipeline_run(p, "envelope");
    if (st == BEV_OK) {
      int accept = 0;
      double prob = 0.0, dist = 0.0;
      st = bev_pipeline_classify(p, opt.profile.c_str(), &accept, &prob, &dist);
      if (st == BEV_OK) {
        std::printf("{\"decision\": \"%s\", \"accept_probability\": %.17g, "
                    "\"mahalanobis_distance\": %.17g}\n",
                    accept ? "accept" : "reject", prob, dist);
      }
    }
  } else if (mesh) {
    st = bev_pipeline_run(p, "envelope");
    if (st == BEV_OK) {
      const std::string out_path =
          opt.mesh_out.empty() ? opt.out + "/envelope.obj" : opt.mesh_out;
      st = bev_pipeline_export_mesh(p, out_path.c_str());
      if (st == BEV_OK) std::printf("wrote %s\n", out_path.c_str());
    }
  } else if (plots) {
    st = bev_pipeline_run(p, "envelope");
    if (st == BEV_OK) {
      st = bev_pipeline_export_plots(p);
      if (st == BEV_OK) std::printf("wrote %s/plots\n", opt.out.c_str());
    }
  } else if (!through_stage) {
    char hash[17];
    if (bev_pipeline_manifest_hash(p, hash, sizeof hash) == BEV_OK) {
      const long dim = bev_pipeline_intersection_dim(p);
      std::printf("manifest_hash %s\nintersection_dim %ld\n", hash, dim);
    }
  }

  bev_pipeline_close(p);
  return st == BEV_OK ? 0 : fail(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-objective inactive-subspace tolerance design"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* c = sub->add_option("--config", opt.config, "pipeline config JSON");
    if (needs_config) c->required();
    sub->add_option("--out", opt.out, "run directory (default: run)");
    sub->add_option("--stage", opt.stage,
                    "force re-run from this stage (deletes its artifacts)");
    sub->add_option("--seed-override", opt.seed_override, "replace sampler seed")
        ->each([&](const std::string&) { opt.has_seed_override = true; });
  };

  auto* run = app.add_subcommand("run", "full pipeline");
  add_common(run);
  auto* fit = app.add_subcommand("fit", "train surrogates");
  add_common(fit);
  auto* subspace = app.add_subcommand("subspace", "covariances and subspaces");
  add_common(subspace);
  auto* intersect = app.add_subcommand("intersect", "intersect inactive subspaces");
  add_common(intersect);
  auto* sample = app.add_subcommand("sample", "hit-and-run sampling");
  add_common(sample);
  auto* envelope = app.add_subcommand("envelope", "band and decision model");
  add_common(envelope);
  auto* classify = app.add_subcommand("classify", "scrap-or-use decision");
  add_common(classify);
  classify->add_option("--profile", opt.profile, "profile CSV to classify")
      ->required();
  auto* mesh = app.add_subcommand("export-mesh", "lofted envelope OBJ");
  add_common(mesh);
  mesh->add_option("--mesh-out", opt.mesh_out, "output OBJ path");
  auto* plots = app.add_subcommand("export-plots", "plot data bundle");
  add_common(plots);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) return run_verb(opt, nullptr, false, false, false);
  if (fit->parsed()) return run_verb(opt, "fit", false, false, false);
  if (subspace->parsed()) return run_verb(opt, "subspace", false, false, false);
  if (intersect->parsed()) return run_verb(opt, "intersect", false, false, false);
  if (sample->parsed()) return run_verb(opt, "sample", false, false, false);
  if (envelope->parsed()) return run_verb(opt, "envelope", false, false, false);
  if (classify->parsed()) return run_verb(opt, nullptr, true, false, false);
  if (mesh->parsed()) return run_verb(opt, nullptr, false, true, false);
  if (plots->parsed()) return run_verb(opt, nullptr, false, false, true);
  return 2;
}
