#include "bev/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bev/mesh.hpp"
#include "bev/rng.hpp"

namespace fs = std::filesystem;

namespace bev {

namespace {

void check_keys(const nlohmann::json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw config_error("config section '" + section + "' must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end()) {
      throw config_error("unknown key '" + key + "' in config section '" +
                         section + "'");
    }
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace

void PipelineConfig::validate() const {
  if (version != 1) throw config_error("unsupported config version");
  if (design.d < 8) throw config_error("design.d must be >= 8");
  if (design.n_nodes < 64) throw config_error("design.n_nodes must be >= 64");
  if (design.amplitude <= 0) throw config_error("design.amplitude must be > 0");
  if (design.gamma <= 1.0) throw config_error("design.gamma must exceed 1");
  if (training.samples < 10) throw config_error("training.samples too small");
  if (training.train_fraction <= 0 || training.train_fraction >= 1) {
    throw config_error("training.train_fraction must be in (0,1)");
  }
  if (scalars.empty() && vectors.empty()) {
    throw config_error("at least one objective is required");
  }
  std::vector<std::string> labels;
  for (const auto& s : scalars) {
    if (s.label.empty()) throw config_error("scalar objective needs a label");
    if (s.source != "loss" && s.source != "mass_flow") {
      throw config_error("scalar source must be 'loss' or 'mass_flow', got '" +
                         s.source + "'");
    }
    if (s.degree < 1 || s.degree > 2) {
      throw config_error("scalar degree must be 1 or 2");
    }
    labels.push_back(s.label);
  }
  for (const auto& v : vectors) {
    if (v.label.empty()) throw config_error("vector objective needs a label");
    if (v.degree < 1 || v.degree > 2) {
      throw config_error("vector degree must be 1 or 2");
    }
    if (v.region != "peak" && v.region != "leading_edge" && !v.region.empty()) {
      throw config_error("vector region must be 'peak', 'leading_edge' or ''");
    }
    if (v.region.empty() && v.nodes.empty()) {
      throw config_error("vector objective '" + v.label +
                         "' needs a region or explicit nodes");
    }
    if (v.radius < 1) throw config_error("vector weight radius must be >= 1");
    labels.push_back(v.label);
  }
  std::sort(labels.begin(), labels.end());
  if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) {
    throw config_error("objective labels must be unique");
  }
  for (const auto& [label, target] : sampler.targets) {
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
      throw config_error("sampler target references unknown label '" + label +
                         "'");
    }
    (void)target;
  }
  if (sampler.h < 1 || sampler.thinning < 1 || sampler.burn_in < 0) {
    throw config_error("sampler settings invalid");
  }
  if (envelope.quantile <= 0.5 || envelope.quantile > 1.0) {
    throw config_error("envelope.quantile must be in (0.5, 1]");
  }
  if (envelope.reject_samples < 10) {
    throw config_error("envelope.reject_samples must be >= 10");
  }
  if (export_.span <= 0) throw config_error("export.span must be > 0");
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["version"] = version;
  j["design"] = {{"d", design.d},
                 {"n_nodes", design.n_nodes},
                 {"amplitude", design.amplitude},
                 {"gamma", design.gamma},
                 {"oracle_seed", design.oracle_seed}};
  j["training"] = {{"samples", training.samples},
                   {"train_fraction", training.train_fraction},
                   {"seed", training.seed}};
  j["objectives"]["scalars"] = nlohmann::json::array();
  for (const auto& s : scalars) {
    j["objectives"]["scalars"].push_back(
        {{"label", s.label}, {"source", s.source}, {"degree", s.degree}});
  }
  j["objectives"]["vectors"] = nlohmann::json::array();
  for (const auto& v : vectors) {
    nlohmann::json jv = {{"label", v.label},
                         {"degree", v.degree},
                         {"region", v.region},
                         {"nodes", v.nodes},
                         {"radius", v.radius}};
    if (v.r_override) jv["r_override"] = *v.r_override;
    j["objectives"]["vectors"].push_back(jv);
  }
  j["covariance"] = {{"n_mc", covariance.n_mc}, {"seed", covariance.seed}};
  j["subspace"] = {{"min_ratio", subspace.min_ratio},
                   {"rank_tol", subspace.rank_tol}};
  j["sampler"] = {{"h", sampler.h},
                  {"burn_in", sampler.burn_in},
                  {"thinning", sampler.thinning},
                  {"seed", sampler.seed},
                  {"targets", sampler.targets}};
  j["envelope"] = {{"quantile", envelope.quantile},
                   {"delta_threshold", envelope.delta_threshold},
                   {"reject_samples", envelope.reject_samples},
                   {"reject_seed", envelope.reject_seed}};
  j["export"] = {{"span", export_.span},
                 {"contour_levels", export_.contour_levels},
                 {"levels_absolute", export_.levels_absolute},
                 {"scale_mm", export_.scale_mm}};
  return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  check_keys(j, "root",
             {"version", "design", "training", "objectives", "covariance",
              "subspace", "sampler", "envelope", "export"});
  PipelineConfig c;
  c.version = j.value("version", 0);
  if (j.contains("design")) {
    const auto& d = j.at("design");
    check_keys(d, "design", {"d", "n_nodes", "amplitude", "gamma", "oracle_seed"});
    c.design.d = d.value("d", c.design.d);
    c.design.n_nodes = d.value("n_nodes", c.design.n_nodes);
    c.design.amplitude = d.value("amplitude", c.design.amplitude);
    c.design.gamma = d.value("gamma", c.design.gamma);
    c.design.oracle_seed = d.value("oracle_seed", c.design.oracle_seed);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t, "training", {"samples", "train_fraction", "seed"});
    c.training.samples = t.value("samples", c.training.samples);
    c.training.train_fraction =
        t.value("train_fraction", c.training.train_fraction);
    c.training.seed = t.value("seed", c.training.seed);
  }
  if (j.contains("objectives")) {
    const auto& o = j.at("objectives");
    check_keys(o, "objectives", {"scalars", "vectors"});
    for (const auto& js : o.value("scalars", nlohmann::json::array())) {
      check_keys(js, "scalar objective", {"label", "source", "degree"});
      ScalarObjectiveConfig s;
      s.label = js.value("label", "");
      s.source = js.value("source", s.label);
      s.degree = js.value("degree", 1);
      c.scalars.push_back(std::move(s));
    }
    for (const auto& jv : o.value("vectors", nlohmann::json::array())) {
      check_keys(jv, "vector objective",
                 {"label", "degree", "region", "nodes", "radius", "r_override"});
      VectorObjectiveConfig v;
      v.label = jv.value("label", "");
      v.degree = jv.value("degree", 2);
      v.region = jv.value("region", "");
      v.nodes = jv.value("nodes", std::vector<Eigen::Index>{});
      v.radius = jv.value("radius", v.radius);
      if (jv.contains("r_override")) {
        v.r_override = jv.at("r_override").get<Eigen::Index>();
      }
      c.vectors.push_back(std::move(v));
    }
  }
  if (j.contains("covariance")) {
    const auto& v = j.at("covariance");
    check_keys(v, "covariance", {"n_mc", "seed"});
    c.covariance.n_mc = v.value("n_mc", c.covariance.n_mc);
    c.covariance.seed = v.value("seed", c.covariance.seed);
  }
  if (j.contains("subspace")) {
    const auto& v = j.at("subspace");
    check_keys(v, "subspace", {"min_ratio", "rank_tol"});
    c.subspace.min_ratio = v.value("min_ratio", c.subspace.min_ratio);
    c.subspace.rank_tol = v.value("rank_tol", c.subspace.rank_tol);
  }
  if (j.contains("sampler")) {
    const auto& v = j.at("sampler");
    check_keys(v, "sampler", {"h", "burn_in", "thinning", "seed", "targets"});
    c.sampler.h = v.value("h", c.sampler.h);
    c.sampler.burn_in = v.value("burn_in", c.sampler.burn_in);
    c.sampler.thinning = v.value("thinning", c.sampler.thinning);
    c.sampler.seed = v.value("seed", c.sampler.seed);
    c.sampler.targets = v.value(
        "targets", std::map<std::string, std::vector<double>>{});
  }
  if (j.contains("envelope")) {
    const auto& v = j.at("envelope");
    check_keys(v, "envelope",
               {"quantile", "delta_threshold", "reject_samples", "reject_seed"});
    c.envelope.quantile = v.value("quantile", c.envelope.quantile);
    c.envelope.delta_threshold =
        v.value("delta_threshold", c.envelope.delta_threshold);
    c.envelope.reject_samples =
        v.value("reject_samples", c.envelope.reject_samples);
    c.envelope.reject_seed = v.value("reject_seed", c.envelope.reject_seed);
  }
  if (j.contains("export")) {
    const auto& v = j.at("export");
    check_keys(v, "export",
               {"span", "contour_levels", "levels_absolute", "scale_mm"});
    c.export_.span = v.value("span", c.export_.span);
    c.export_.contour_levels =
        v.value("contour_levels", c.export_.contour_levels);
    c.export_.levels_absolute =
        v.value("levels_absolute", c.export_.levels_absolute);
    c.export_.scale_mm = v.value("scale_mm", c.export_.scale_mm);
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config parse error: " + std::string(e.what()));
  }
  return from_json(j);
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot hash missing file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a_hex(buf.str());
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw config_error("cannot write " + tmp);
    out << content;
  }
  fs::rename(tmp, path);
}

const std::vector<std::string>& Pipeline::stage_names() {
  static const std::vector<std::string> names = {
      "training", "fit",    "covariance", "subspace",
      "intersect", "sample", "envelope",   "manifest"};
  return names;
}

Pipeline::Pipeline(PipelineConfig config, std::string out_dir)
    : config_(std::move(config)), out_dir_(std::move(out_dir)) {
  config_.validate();
  fs::create_directories(out_dir_);
  fs::create_directories(path("covariances"));
  fs::create_directories(path("subspaces"));
}

void Pipeline::set_seed_override(std::uint64_t seed) {
  config_.sampler.seed = seed;
}

std::string Pipeline::path(const std::string& rel) const {
  return (fs::path(out_dir_) / rel).string();
}

GeometryOracle Pipeline::make_oracle() const {
  GeometryOracle::Settings s;
  s.d = config_.design.d;
  s.n_nodes = config_.design.n_nodes;
  s.amplitude = config_.design.amplitude;
  s.gamma = config_.design.gamma;
  s.seed = config_.design.oracle_seed;
  return GeometryOracle(s);
}

WeightVector Pipeline::vector_weights(const VectorObjectiveConfig& vc,
                                      const GeometryOracle& oracle) const {
  std::vector<Eigen::Index> core = vc.nodes;
  if (vc.region == "peak") {
    core = {oracle.peak_node()};
  } else if (vc.region == "leading_edge") {
    core = {oracle.leading_edge_node()};
  }
  return smooth_weights(config_.design.n_nodes, core, vc.radius, vc.label);
}

std::vector<std::string> Pipeline::stage_artifacts(
    const std::string& stage) const {
  if (stage == "training") {
    return {"training.csv", "oracle.json", "nominal_profile.csv"};
  }
  if (stage == "fit") return {"surrogates.json"};
  if (stage == "covariance" || stage == "subspace") {
    std::vector<std::string> out;
    const std::string dir = stage == "covariance" ? "covariances/" : "subspaces/";
    for (const auto& s : config_.scalars) out.push_back(dir + s.label + ".json");
    for (const auto& v : config_.vectors) out.push_back(dir + v.label + ".json");
    return out;
  }
  if (stage == "intersect") return {"coordinate_spec.json"};
  if (stage == "sample") return {"ensemble.csv", "ensemble.json"};
  if (stage == "envelope") {
    return {"envelope.csv", "decision_model.json", "ensemble_outputs.csv"};
  }
  if (stage == "manifest") return {"manifest.json"};
  throw config_error("unknown stage '" + stage + "'");
}

bool Pipeline::stage_done(const std::string& stage) const {
  for (const auto& rel : stage_artifacts(stage)) {
    if (!fs::exists(path(rel))) return false;
  }
  return true;
}

void Pipeline::invalidate_from(const std::string& stage) {
  const auto& names = stage_names();
  auto it = std::find(names.begin(), names.end(), stage);
  if (it == names.end()) throw config_error("unknown stage '" + stage + "'");
  for (; it != names.end(); ++it) {
    for (const auto& rel : stage_artifacts(*it)) {
      fs::remove(path(rel));
    }
  }
}

void Pipeline::run_stage(const std::string& stage) {
  try {
    if (stage == "training") stage_training();
    else if (stage == "fit") stage_fit();
    else if (stage == "covariance") stage_covariance();
    else if (stage == "subspace") stage_subspace();
    else if (stage == "intersect") stage_intersect();
    else if (stage == "sample") stage_sample();
    else if (stage == "envelope") stage_envelope();
    else if (stage == "manifest") stage_manifest();
    else throw config_error("unknown stage '" + stage + "'");
  } catch (const std::exception& e) {
    nlohmann::json err = {{"stage", stage}, {"error", e.what()}};
    write_file_atomic(path("error.json"), err.dump(2) + "\n");
    throw;
  }
}

void Pipeline::run_through(const std::string& stage) {
  const auto& names = stage_names();
  if (std::find(names.begin(), names.end(), stage) == names.end()) {
    throw config_error("unknown stage '" + stage + "'");
  }
  for (const auto& name : names) {
    // The manifest is always refreshed so its hashes cover current files.
    if (name != "manifest" && stage_done(name)) {
      if (name == stage) return;
      continue;
    }
    run_stage(name);
    if (name == stage) return;
  }
}

void Pipeline::run() { run_through("manifest"); }

void Pipeline::stage_training() {
  const GeometryOracle oracle = make_oracle();
  const Eigen::Index d = config_.design.d;
  const Eigen::Index n = config_.design.n_nodes;
  const Eigen::Index m = config_.training.samples;
  Rng rng(config_.training.seed);

  Eigen::MatrixXd inputs(m, d);
  Eigen::MatrixXd outputs(m, 2 + n);  // loss, mass_flow, mach nodes
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXd x = rng.cube_point(d);
    const FlowSample flow = oracle.evaluate_flow(x);
    inputs.row(i) = x.transpose();
    outputs(i, 0) = flow.loss;
    outputs(i, 1) = flow.mass_flow;
    outputs.row(i).segment(2, n) = flow.mach_distribution.transpose();
  }
  const TrainingSet ts = TrainingSet::with_split(
      std::move(inputs), std::move(outputs), config_.training.train_fraction);
  save_training_csv(path("training.csv.tmp"), ts);
  fs::rename(path("training.csv.tmp"), path("training.csv"));
  write_file_atomic(path("oracle.json"),
                    oracle.generator_to_json().dump(2) + "\n");
  oracle.nominal().save_csv(path("nominal_profile.csv.tmp"));
  fs::rename(path("nominal_profile.csv.tmp"), path("nominal_profile.csv"));
}

void Pipeline::stage_fit() {
  const GeometryOracle oracle = make_oracle();
  const TrainingSet ts = load_training_csv(path("training.csv"), config_.design.d,
                                           config_.training.train_fraction);
  nlohmann::json j;
  for (const auto& s : config_.scalars) {
    const Eigen::Index col = s.source == "loss" ? 0 : 1;
    j["scalars"][s.label] = SurrogateModel::fit(ts, s.degree, col).to_json();
  }
  for (const auto& v : config_.vectors) {
    const WeightVector w = vector_weights(v, oracle);
    nlohmann::json jv;
    std::vector<Eigen::Index> node_indices;
    std::vector<double> weights;
    jv["models"] = nlohmann::json::array();
    for (Eigen::Index node = 0; node < w.weights.size(); ++node) {
      if (w.weights[node] <= 0.0) continue;
      node_indices.push_back(node);
      weights.push_back(w.weights[node]);
      jv["models"].push_back(
          SurrogateModel::fit(ts, v.degree, 2 + node).to_json());
    }
    jv["node_indices"] = node_indices;
    jv["weights"] = weights;
    j["vectors"][v.label] = jv;
  }
  write_file_atomic(path("surrogates.json"), j.dump() + "\n");
}

void Pipeline::stage_covariance() {
  std::ifstream in(path("surrogates.json"));
  if (!in) throw config_error("missing surrogates.json");
  const nlohmann::json j = nlohmann::json::parse(in);
  const Eigen::Index n_mc = config_.covariance.n_mc > 0
                                ? config_.covariance.n_mc
                                : 100 * config_.design.d;
  for (const auto& s : config_.scalars) {
    const auto model = SurrogateModel::from_json(j.at("scalars").at(s.label));
    const GradientCovariance c =
        scalar_covariance(model, n_mc, config_.covariance.seed, s.label);
    write_file_atomic(path("covariances/" + s.label + ".json"),
                      c.to_json().dump() + "\n");
  }
  for (const auto& v : config_.vectors) {
    const auto& jv = j.at("vectors").at(v.label);
    std::vector<SurrogateModel> models;
    for (const auto& jm : jv.at("models")) {
      models.push_back(SurrogateModel::from_json(jm));
    }
    WeightVector w;
    const auto weights = jv.at("weights").get<std::vector<double>>();
    w.weights = Eigen::Map<const Eigen::VectorXd>(
        weights.data(), static_cast<Eigen::Index>(weights.size()));
    w.description = v.label;
    const GradientCovariance c =
        vector_covariance(models, w, n_mc, config_.covariance.seed, v.label);
    write_file_atomic(path("covariances/" + v.label + ".json"),
                      c.to_json().dump() + "\n");
  }
}

void Pipeline::stage_subspace() {
  auto process = [&](const std::string& label,
                     std::optional<Eigen::Index> r_override) {
    std::ifstream in(path("covariances/" + label + ".json"));
    if (!in) throw config_error("missing covariance for '" + label + "'");
    const GradientCovariance c =
        GradientCovariance::from_json(nlohmann::json::parse(in));
    const SubspacePair sp =
        subspace_from_covariance(c, r_override, config_.subspace.min_ratio);
    write_file_atomic(path("subspaces/" + label + ".json"),
                      subspace_pair_to_json(sp).dump() + "\n");
  };
  for (const auto& s : config_.scalars) process(s.label, std::nullopt);
  for (const auto& v : config_.vectors) process(v.label, v.r_override);
}

void Pipeline::stage_intersect() {
  std::vector<ActiveBlock> blocks;
  auto add_block = [&](const std::string& label) {
    std::ifstream in(path("subspaces/" + label + ".json"));
    if (!in) throw config_error("missing subspace for '" + label + "'");
    const SubspacePair sp = subspace_pair_from_json(nlohmann::json::parse(in));
    ActiveBlock b;
    b.label = label;
    b.basis = sp.active;
    const auto it = config_.sampler.targets.find(label);
    if (it == config_.sampler.targets.end()) {
      b.target = Eigen::VectorXd::Zero(sp.gap_index);
    } else {
      if (static_cast<Eigen::Index>(it->second.size()) != sp.gap_index) {
        std::ostringstream os;
        os << "target for '" << label << "' has length " << it->second.size()
           << " but the active block has rank " << sp.gap_index;
        throw config_error(os.str());
      }
      b.target = Eigen::Map<const Eigen::VectorXd>(
          it->second.data(), static_cast<Eigen::Index>(it->second.size()));
    }
    blocks.push_back(std::move(b));
  };
  for (const auto& s : config_.scalars) add_block(s.label);
  for (const auto& v : config_.vectors) add_block(v.label);
  const ActiveCoordinateSpec spec =
      make_coordinate_spec(blocks, config_.subspace.rank_tol);
  write_file_atomic(path("coordinate_spec.json"), spec.to_json().dump() + "\n");
}

void Pipeline::stage_sample() {
  std::ifstream in(path("coordinate_spec.json"));
  if (!in) throw config_error("missing coordinate_spec.json");
  const ActiveCoordinateSpec spec =
      ActiveCoordinateSpec::from_json(nlohmann::json::parse(in));
  const SampleEnsemble ensemble =
      hit_and_run(spec, config_.sampler.h, config_.sampler.seed,
                  config_.sampler.burn_in, config_.sampler.thinning);
  ensemble.save_csv(path("ensemble.csv.tmp"), path("ensemble.json.tmp"));
  fs::rename(path("ensemble.csv.tmp"), path("ensemble.csv"));
  fs::rename(path("ensemble.json.tmp"), path("ensemble.json"));
}

void Pipeline::stage_envelope() {
  const GeometryOracle oracle = make_oracle();
  const SampleEnsemble ensemble =
      SampleEnsemble::load_csv(path("ensemble.csv"), path("ensemble.json"));

  const EnvelopeBand band = build_band(oracle, ensemble, config_.envelope.quantile);
  band.save_csv(path("envelope.csv.tmp"));
  fs::rename(path("envelope.csv.tmp"), path("envelope.csv"));

  // Geometry statistics over ensemble displacements.
  const Eigen::MatrixXd disp =
      ensemble.designs * oracle.bump_matrix().transpose();
  DecisionModel model;
  model.geometry = MahalanobisModel::fit(disp);
  model.delta_threshold = config_.envelope.delta_threshold;

  // Outputs of the ensemble designs through the oracle.
  const Eigen::Index h = ensemble.designs.rows();
  Eigen::MatrixXd outputs(h, 2);
  for (Eigen::Index i = 0; i < h; ++i) {
    const FlowSample flow = oracle.evaluate_flow(ensemble.designs.row(i).transpose());
    outputs(i, 0) = flow.loss;
    outputs(i, 1) = flow.mass_flow;
  }
  const MahalanobisModel output_stats = MahalanobisModel::fit(outputs);
  {
    std::ostringstream os;
    os.precision(17);
    os << "loss,mass_flow\n";
    for (Eigen::Index i = 0; i < h; ++i) {
      os << outputs(i, 0) << "," << outputs(i, 1) << "\n";
    }
    write_file_atomic(path("ensemble_outputs.csv"), os.str());
  }

  // Accept labels: ensemble members accept; random hypercube designs
  // reject unless their output delta is within 1 (near-invariant designs
  // must not be mislabeled).
  const Eigen::Index n_reject = config_.envelope.reject_samples;
  Rng rng(config_.envelope.reject_seed);
  std::vector<double> distances;
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < h; ++i) {
    distances.push_back(model.geometry.distance(disp.row(i).transpose()));
    labels.push_back(1);
  }
  for (Eigen::Index i = 0; i < n_reject; ++i) {
    const Eigen::VectorXd x = rng.cube_point(config_.design.d);
    const FlowSample flow = oracle.evaluate_flow(x);
    Eigen::Vector2d y(flow.loss, flow.mass_flow);
    const double delta = output_stats.distance(y);
    distances.push_back(
        model.geometry.distance(oracle.displacement(x)));
    labels.push_back(delta <= 1.0 ? 1 : 0);
  }
  model.logistic = train_logistic(
      Eigen::Map<const Eigen::VectorXd>(distances.data(),
                                        static_cast<Eigen::Index>(distances.size())),
      labels);
  model.threshold_distance =
      model.logistic.slope != 0.0
          ? -model.logistic.intercept / model.logistic.slope
          : 0.0;
  model.trained = true;

  nlohmann::json j;
  j["decision"] = model.to_json();
  j["output_stats"] = output_stats.to_json();
  write_file_atomic(path("decision_model.json"), j.dump() + "\n");
}

void Pipeline::stage_manifest() {
  nlohmann::json j;
  j["config"] = config_.to_json();
  j["config_hash"] = fnv1a_hex(config_.to_json().dump());
  nlohmann::json artifacts;
  for (const auto& stage : stage_names()) {
    if (stage == "manifest") continue;
    for (const auto& rel : stage_artifacts(stage)) {
      artifacts[rel] = hash_file(path(rel));
    }
  }
  j["artifacts"] = artifacts;
  {
    std::ifstream in(path("coordinate_spec.json"));
    const ActiveCoordinateSpec spec =
        ActiveCoordinateSpec::from_json(nlohmann::json::parse(in));
    j["intersection_dim"] = spec.inactive_dim();
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : spec.blocks) {
      blocks.push_back({{"label", b.label}, {"rank", b.basis.subspace_dim()}});
    }
    j["active_blocks"] = blocks;
  }
  j["seeds"] = {{"oracle", config_.design.oracle_seed},
                {"training", config_.training.seed},
                {"covariance", config_.covariance.seed},
                {"sampler", config_.sampler.seed},
                {"reject", config_.envelope.reject_seed}};
  j["manifest_hash"] = fnv1a_hex(j.dump());
  write_file_atomic(path("manifest.json"), j.dump(2) + "\n");
}

Classification Pipeline::classify_profile_csv(
    const std::string& profile_csv) const {
  std::ifstream in(path("decision_model.json"));
  if (!in) throw config_error("missing decision_model.json; run the pipeline");
  const nlohmann::json j = nlohmann::json::parse(in);
  const DecisionModel model = DecisionModel::from_json(j.at("decision"));
  const GeometryOracle oracle = make_oracle();
  const BladeProfile profile = BladeProfile::load_csv(profile_csv);
  return classify_profile(model, oracle, profile);
}

void Pipeline::export_mesh(const std::string& obj_path) const {
  const EnvelopeBand band = EnvelopeBand::load_csv(path("envelope.csv"));
  const TriMesh mesh =
      export_envelope_mesh(band, config_.export_.span,
                           config_.export_.contour_levels,
                           config_.export_.levels_absolute);
  mesh.save_obj(obj_path + ".tmp", config_.export_.scale_mm);
  fs::rename(obj_path + ".tmp", obj_path);

  // Mesh stats recorded alongside the manifest.
  nlohmann::json j = {{"vertices", mesh.vertex_count()},
                      {"faces", mesh.face_count()},
                      {"watertight", mesh.all_objects_watertight()}};
  write_file_atomic(path("mesh_stats.json"), j.dump(2) + "\n");
}

void Pipeline::export_plots() const {
  std::vector<std::string> missing;
  for (const auto& rel : {std::string("training.csv"),
                          std::string("ensemble_outputs.csv"),
                          std::string("decision_model.json"),
                          std::string("envelope.csv")}) {
    if (!fs::exists(path(rel))) missing.push_back(rel);
  }
  std::vector<std::string> labels;
  for (const auto& s : config_.scalars) labels.push_back(s.label);
  for (const auto& v : config_.vectors) labels.push_back(v.label);
  for (const auto& label : labels) {
    if (!fs::exists(path("subspaces/" + label + ".json"))) {
      missing.push_back("subspaces/" + label + ".json");
    }
  }
  if (!missing.empty()) {
    std::string what = "cannot export plots; missing artifacts:";
    for (const auto& m : missing) what += " " + m;
    throw config_error(what);
  }
  fs::create_directories(path("plots"));

  // Eigenvalue spectra, one row per eigenvalue.
  std::map<std::string, SubspacePair> pairs;
  for (const auto& label : labels) {
    std::ifstream in(path("subspaces/" + label + ".json"));
    pairs.emplace(label,
                  subspace_pair_from_json(nlohmann::json::parse(in)));
    std::ostringstream os;
    os.precision(17);
    os << "index,eigenvalue\n";
    const auto& sp = pairs.at(label);
    for (Eigen::Index i = 0; i < sp.eigenvalues.size(); ++i) {
      os << i << "," << sp.eigenvalues[i] << "\n";
    }
    write_file_atomic(path("plots/spectrum_" + label + ".csv"), os.str());
  }

  // Sufficient summary scatter for scalar objectives: active coordinates
  // against the observed output.
  const TrainingSet ts = load_training_csv(path("training.csv"), config_.design.d,
                                           config_.training.train_fraction);
  for (const auto& s : config_.scalars) {
    const auto& sp = pairs.at(s.label);
    const Eigen::Index col = s.source == "loss" ? 0 : 1;
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index k = 0; k < sp.gap_index; ++k) os << "u" << k + 1 << ",";
    os << "output\n";
    for (Eigen::Index i = 0; i < ts.inputs.rows(); ++i) {
      const Eigen::VectorXd u =
          sp.active.columns.transpose() * ts.inputs.row(i).transpose();
      for (Eigen::Index k = 0; k < u.size(); ++k) os << u[k] << ",";
      os << ts.outputs(i, col) << "\n";
    }
    write_file_atomic(path("plots/summary_" + s.label + ".csv"), os.str());
  }

  // Invariance scatter: training outputs versus ensemble outputs.
  {
    std::ostringstream os;
    os.precision(17);
    os << "set,loss,mass_flow\n";
    for (Eigen::Index i = 0; i < ts.inputs.rows(); ++i) {
      os << "training," << ts.outputs(i, 0) << "," << ts.outputs(i, 1) << "\n";
    }
    std::ifstream in(path("ensemble_outputs.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty()) os << "ensemble," << line << "\n";
    }
    write_file_atomic(path("plots/invariance.csv"), os.str());
  }

  // Logistic curve samples.
  {
    std::ifstream in(path("decision_model.json"));
    const DecisionModel model =
        DecisionModel::from_json(nlohmann::json::parse(in).at("decision"));
    const double d_max = std::max(2.0 * model.threshold_distance, 10.0);
    std::ostringstream os;
    os.precision(17);
    os << "distance,accept_probability\n";
    for (int i = 0; i <= 200; ++i) {
      const double d = d_max * i / 200.0;
      os << d << "," << model.accept_probability(d) << "\n";
    }
    write_file_atomic(path("plots/logistic_curve.csv"), os.str());
  }
}

std::string Pipeline::manifest_hash() const {
  std::ifstream in(path("manifest.json"));
  if (!in) throw config_error("missing manifest.json; run the pipeline");
  return nlohmann::json::parse(in).at("manifest_hash").get<std::string>();
}

Eigen::Index Pipeline::intersection_dim() const {
  std::ifstream in(path("coordinate_spec.json"));
  if (!in) throw config_error("missing coordinate_spec.json");
  const ActiveCoordinateSpec spec =
      ActiveCoordinateSpec::from_json(nlohmann::json::parse(in));
  return spec.inactive_dim();
}

}  // namespace bev
