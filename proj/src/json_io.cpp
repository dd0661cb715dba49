#include "amsa/json_io.hpp"

#include <fstream>

namespace amsa {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& doc) {
  if (!doc.is_array() || doc.empty())
    throw ValidationError("json: expected a non-empty array of rows");
  const int rows = static_cast<int>(doc.size());
  const int cols = static_cast<int>(doc[0].size());
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(doc[i].size()) != cols)
      throw ValidationError("json: ragged matrix rows");
    for (int j = 0; j < cols; ++j) M(i, j) = doc[i][j].get<double>();
  }
  return M;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& doc) {
  Eigen::VectorXd v(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) v(i) = doc[i].get<double>();
  return v;
}

json metadata_to_json(const SystemMetadata& meta) {
  json doc = json::object();
  if (meta.delta) doc["delta"] = *meta.delta;
  if (meta.lipschitz) doc["lipschitz"] = *meta.lipschitz;
  if (meta.target_bound) doc["target_bound"] = *meta.target_bound;
  if (meta.noise_scale) doc["noise_scale"] = *meta.noise_scale;
  if (meta.solution) {
    json blocks = json::array();
    for (const auto& b : meta.solution->blocks())
      blocks.push_back(vector_to_json(b));
    doc["solution"] = std::move(blocks);
  }
  doc["mean_consistent"] = meta.mean_consistent;
  return doc;
}

SystemMetadata metadata_from_json(const json& doc) {
  SystemMetadata meta;
  if (doc.contains("delta")) meta.delta = doc["delta"].get<double>();
  if (doc.contains("lipschitz")) meta.lipschitz = doc["lipschitz"].get<double>();
  if (doc.contains("target_bound"))
    meta.target_bound = doc["target_bound"].get<double>();
  if (doc.contains("noise_scale"))
    meta.noise_scale = doc["noise_scale"].get<double>();
  if (doc.contains("solution")) {
    std::vector<Eigen::VectorXd> blocks;
    for (const auto& b : doc["solution"]) blocks.push_back(vector_from_json(b));
    meta.solution = ParameterStack(std::move(blocks));
  }
  if (doc.contains("mean_consistent"))
    meta.mean_consistent = doc["mean_consistent"].get<bool>();
  return meta;
}

}  // namespace

json kernel_to_json(const FiniteKernel& kernel) {
  json doc;
  doc["m"] = kernel.size();
  switch (kernel.family()) {
    case FiniteKernel::Family::fixed:
      doc["family"] = "fixed";
      doc["P"] = matrix_to_json(kernel.base_matrix());
      break;
    case FiniteKernel::Family::theta_mixture:
      doc["family"] = "theta_mixture";
      doc["P_a"] = matrix_to_json(kernel.base_matrix());
      doc["P_b"] = matrix_to_json(kernel.alt_matrix());
      doc["epsilon"] = kernel.epsilon();
      doc["clamp_weights"] = vector_to_json(kernel.clamp_weights());
      doc["clamp_bias"] = kernel.clamp_bias();
      break;
    case FiniteKernel::Family::custom:
      throw UsageError("kernel_to_json: custom kernels are embedded in their "
                       "problem documents and have no standalone form");
  }
  return doc;
}

FiniteKernel kernel_from_json(const json& doc) {
  const std::string family = doc.at("family").get<std::string>();
  if (family == "fixed") return FiniteKernel::fixed(matrix_from_json(doc.at("P")));
  if (family == "theta_mixture")
    return FiniteKernel::theta_mixture(
        matrix_from_json(doc.at("P_a")), matrix_from_json(doc.at("P_b")),
        doc.at("epsilon").get<double>(),
        vector_from_json(doc.at("clamp_weights")),
        doc.at("clamp_bias").get<double>());
  throw ValidationError("kernel_from_json: unknown family '" + family + "'");
}

json system_to_json(const OperatorSystem& system) {
  json doc;
  doc["n_levels"] = system.n_levels();
  doc["dims"] = system.dims();
  doc["sample_space_size"] = system.sample_space_size();
  doc["kind"] = system.kind();
  doc["metadata"] = metadata_to_json(system.metadata());

  if (const auto* nl = dynamic_cast<const NestedLinearSystem*>(&system)) {
    const NestedLinearSpec& spec = nl->spec();
    json payload;
    json A = json::array();
    for (const auto& row : spec.A) {
      json r = json::array();
      for (const auto& block : row) r.push_back(matrix_to_json(block));
      A.push_back(std::move(r));
    }
    payload["A"] = std::move(A);
    json b = json::array();
    for (const auto& bi : spec.b) b.push_back(vector_to_json(bi));
    payload["b"] = std::move(b);
    json noise = json::array();
    for (const auto& g : spec.noise) noise.push_back(matrix_to_json(g));
    payload["noise"] = std::move(noise);
    payload["coupling_scale"] = spec.coupling_scale;
    payload["noise_scale"] = spec.noise_scale;
    payload["kernel"] = kernel_to_json(system.kernel());
    doc["payload"] = std::move(payload);
    return doc;
  }
  if (const auto* mfg = dynamic_cast<const MfgSystem*>(&system)) {
    const MfgSpec& spec = mfg->spec();
    json payload;
    payload["S"] = spec.n_states;
    payload["A"] = spec.n_actions;
    json transition = json::array();
    for (const auto& Pa : spec.transition)
      transition.push_back(matrix_to_json(Pa));
    payload["transition"] = std::move(transition);
    payload["reward"] = matrix_to_json(spec.reward);
    payload["ergodicity_floor"] = spec.ergodicity_floor;
    payload["u_coupling"] = spec.u_coupling;
    payload["seed"] = spec.seed;
    doc["payload"] = std::move(payload);
    return doc;
  }
  throw UsageError("system_to_json: kind '" + system.kind() +
                   "' has no serialized form");
}

std::shared_ptr<const OperatorSystem> system_from_json(const json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "nested_linear") {
    const json& payload = doc.at("payload");
    NestedLinearSpec spec;
    spec.n_levels = doc.at("n_levels").get<int>();
    spec.dims = doc.at("dims").get<std::vector<int>>();
    for (const auto& row : payload.at("A")) {
      spec.A.emplace_back();
      for (const auto& block : row)
        spec.A.back().push_back(matrix_from_json(block));
    }
    for (const auto& bi : payload.at("b"))
      spec.b.push_back(vector_from_json(bi));
    for (const auto& g : payload.at("noise"))
      spec.noise.push_back(matrix_from_json(g));
    spec.coupling_scale = payload.at("coupling_scale").get<double>();
    spec.noise_scale = payload.at("noise_scale").get<double>();
    FiniteKernel kernel = kernel_from_json(payload.at("kernel"));
    return std::make_shared<NestedLinearSystem>(
        std::move(spec), std::move(kernel),
        metadata_from_json(doc.value("metadata", json::object())));
  }
  if (kind == "mfg") {
    const json& payload = doc.at("payload");
    MfgSpec spec;
    spec.n_states = payload.at("S").get<int>();
    spec.n_actions = payload.at("A").get<int>();
    for (const auto& Pa : payload.at("transition"))
      spec.transition.push_back(matrix_from_json(Pa));
    spec.reward = matrix_from_json(payload.at("reward"));
    spec.ergodicity_floor = payload.at("ergodicity_floor").get<double>();
    spec.u_coupling = payload.value("u_coupling", 0.0);
    spec.seed = payload.value("seed", 0ULL);
    return std::make_shared<MfgSystem>(std::move(spec));
  }
  throw ValidationError("system_from_json: unknown kind '" + kind + "'");
}

json schedule_to_json(const StepSchedule& schedule) {
  json doc;
  doc["kind"] =
      schedule.kind() == StepSchedule::Kind::amsa ? "amsa" : "msa";
  doc["n_levels"] = schedule.n_levels();
  doc["h"] = schedule.h();
  doc["c"] = schedule.c();
  if (schedule.kind() == StepSchedule::Kind::amsa)
    doc["c_lambda"] = schedule.c_lambda();
  else
    doc["exponents"] = schedule.exponents();
  return doc;
}

StepSchedule schedule_from_json(const json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  const int n = doc.at("n_levels").get<int>();
  const double h = doc.at("h").get<double>();
  auto c = doc.at("c").get<std::vector<double>>();
  if (kind == "amsa")
    return StepSchedule::amsa(n, h, doc.at("c_lambda").get<double>(),
                              std::move(c));
  if (kind == "msa")
    return StepSchedule::msa(n, h, std::move(c),
                             doc.at("exponents").get<std::vector<double>>());
  throw ValidationError("schedule_from_json: unknown kind '" + kind + "'");
}

json assumption_report_to_json(const AssumptionEstimates& estimates) {
  json doc;
  doc["delta_hat"] = estimates.delta_hat;
  doc["L_hat"] = estimates.L_hat;
  doc["B_hat"] = estimates.B_hat;
  doc["D_bound"] = estimates.D_bound;
  doc["sampled_region"] = estimates.sampled_region;
  return doc;
}

json condition_report_to_json(const ConditionReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows) {
    json r;
    r["name"] = row.name;
    r["worst_t"] = row.worst_t;
    r["lhs"] = row.lhs;
    r["rhs"] = row.rhs;
    r["pass"] = row.pass;
    r["first_pass_t"] = row.first_pass_t;
    rows.push_back(std::move(r));
  }
  json doc;
  doc["rows"] = std::move(rows);
  doc["all_pass"] = report.all_pass;
  doc["caveat"] = report.caveat;
  return doc;
}

std::string config_hash_hex(const json& doc) {
  const std::string dump = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open JSON file '" + path + "'");
  json doc;
  in >> doc;
  return doc;
}

void save_json_file(const json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write JSON file '" + path + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace amsa
