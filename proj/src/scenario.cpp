#include "calinv/scenario.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "calinv/calabi.hpp"
#include "calinv/errors.hpp"
#include "calinv/expr.hpp"
#include "calinv/genfun.hpp"
#include "calinv/geom.hpp"
#include "calinv/hamflow.hpp"
#include "calinv/parallel.hpp"
#include "calinv/rotations.hpp"

namespace calinv::cli {

using json = nlohmann::json;
using geom::SupportBox;
using geom::Vec;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

// Best-effort line of the first occurrence of a quoted name in the source.
int line_of(const std::string& text, const std::string& name) {
  auto pos = text.find("\"" + name + "\"");
  if (pos == std::string::npos) return -1;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + pos, '\n'));
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path);
  }
  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      out_ << (i ? "," : "") << cols[i];
    out_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

std::string fmt(double v) { return format_double(v); }
std::string fmt(int v) { return std::to_string(v); }

Vec read_point(const json& j) {
  Vec out;
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

struct Declarations {
  int n = 1;
  std::map<std::string, ham::HamiltonianField> hamiltonians;
  std::map<std::string, gen::GeneratingFunction> genfuns;
  std::map<std::string, rot::AngularProfile> profiles;
  std::map<std::string, geom::LiouvilleFlow> centers;
  std::string raw;  // scenario text, for line lookups

  template <typename M>
  const typename M::mapped_type& lookup(const M& m, const std::string& name,
                                        const char* what, int task_index) const {
    auto it = m.find(name);
    if (it == m.end()) {
      std::ostringstream msg;
      msg << "task " << task_index << " references undeclared " << what << " '" << name
          << "'";
      int line = line_of(raw, name);
      if (line > 0) msg << " (first mentioned near line " << line << ")";
      throw SchemaError(msg.str());
    }
    return it->second;
  }
};

Declarations parse_declarations(const json& root, const std::string& raw) {
  Declarations decl;
  decl.raw = raw;
  decl.n = root.value("dimension", 1);
  if (decl.n < 1 || decl.n > 4) throw SchemaError("dimension must be in [1,4]");

  auto parse_expr = [](const std::string& src, const std::string& name) {
    try {
      return expr::Expression::parse(src);
    } catch (const expr::SyntaxError& e) {
      throw SchemaError("expression for '" + name + "': " + e.what());
    }
  };

  if (root.contains("hamiltonians")) {
    for (const auto& [name, spec] : root.at("hamiltonians").items()) {
      Vec center = spec.contains("center") ? read_point(spec.at("center"))
                                           : Vec(2 * decl.n, 0.0);
      if (static_cast<int>(center.size()) != 2 * decl.n)
        throw SchemaError("hamiltonian '" + name + "': center has wrong dimension");
      SupportBox box{center, spec.value("radius", 1.0)};
      auto e = parse_expr(spec.at("expr").get<std::string>(), name);
      bool autonomous = spec.value("autonomous", false) || !e.free_vars().count("t");
      decl.hamiltonians.emplace(
          name, ham::HamiltonianField::from_expression(e, decl.n, box, autonomous));
    }
  }
  if (root.contains("generating_functions")) {
    for (const auto& [name, spec] : root.at("generating_functions").items()) {
      Vec center = spec.contains("center") ? read_point(spec.at("center"))
                                           : Vec(2 * decl.n, 0.0);
      SupportBox box{center, spec.value("radius", 1.0)};
      auto e = parse_expr(spec.at("expr").get<std::string>(), name);
      decl.genfuns.emplace(
          name, gen::GeneratingFunction::from_expression(e, decl.n, box));
    }
  }
  if (root.contains("profiles")) {
    for (const auto& [name, spec] : root.at("profiles").items()) {
      auto e = parse_expr(spec.at("expr").get<std::string>(), name);
      decl.profiles.emplace(
          name, rot::AngularProfile::from_expression(
                    e, spec.value("support_radius", 1.0),
                    spec.value("integrable_near_zero", true),
                    spec.value("r_rho_to_zero", true), spec.value("bounded", true)));
    }
  }
  decl.centers.emplace("origin", geom::LiouvilleFlow{Vec(2 * decl.n, 0.0)});
  if (root.contains("liouville_centers")) {
    for (const auto& [name, spec] : root.at("liouville_centers").items()) {
      Vec c = read_point(spec);
      if (static_cast<int>(c.size()) != 2 * decl.n)
        throw SchemaError("liouville center '" + name + "' has wrong dimension");
      decl.centers.insert_or_assign(name, geom::LiouvilleFlow{c});
    }
  }
  return decl;
}

int knob_int(const json& task, const char* key, int fallback, int override_value,
             int min_value) {
  int v = override_value > 0 ? override_value : task.value(key, fallback);
  if (v < min_value)
    throw SchemaError(std::string("knob '") + key + "' below minimum " +
                      std::to_string(min_value));
  return v;
}

std::vector<double> knob_list(const json& task, const char* key,
                              std::vector<double> fallback) {
  if (!task.contains(key)) return fallback;
  std::vector<double> out;
  for (const auto& v : task.at(key)) out.push_back(v.get<double>());
  if (out.empty()) throw SchemaError(std::string("knob '") + key + "' is empty");
  return out;
}

// One task dispatcher; returns the CSV path.
std::string run_task(const Declarations& decl, const json& task, int index,
                     const std::string& out_dir, const RunKnobs& knobs) {
  const std::string kind = task.at("kind").get<std::string>();
  std::string csv_path = out_dir + "/task_" + std::to_string(index) + "_" + kind + ".csv";
  CsvWriter csv(csv_path);
  gen::SolveParams solve;
  if (knobs.tol > 0) solve.tol = knobs.tol;

  auto the_ham = [&](const char* key = "hamiltonian") -> const ham::HamiltonianField& {
    return decl.lookup(decl.hamiltonians, task.at(key).get<std::string>(), "hamiltonian",
                       index);
  };
  auto the_genfun = [&](const char* key = "genfun") -> const gen::GeneratingFunction& {
    return decl.lookup(decl.genfuns, task.at(key).get<std::string>(),
                       "generating function", index);
  };
  auto the_profile = [&](const char* key = "profile") -> const rot::AngularProfile& {
    return decl.lookup(decl.profiles, task.at(key).get<std::string>(), "profile", index);
  };
  auto the_center = [&]() -> const geom::LiouvilleFlow& {
    return decl.lookup(decl.centers, task.value("center", "origin"), "liouville center",
                       index);
  };

  if (kind == "calabi") {
    cal::QuadParams params;
    params.grid = knob_int(task, "grid", 128, knobs.grid, 8);
    params.time_steps = knob_int(task, "time_steps", 8, -1, 2);
    auto res = cal::calabi_eq1(the_ham(), params);
    csv.header({"value", "error_estimate", "grid", "time_steps"});
    csv.row({fmt(res.value), fmt(res.error_estimate), fmt(res.grid),
             fmt(res.time_steps)});
  } else if (kind == "homomorphism") {
    cal::QuadParams params;
    params.grid = knob_int(task, "grid", 48, knobs.grid, 8);
    params.time_steps = knob_int(task, "time_steps", 6, -1, 2);
    params.flow_steps = knob_int(task, "flow_steps", 24, knobs.steps, 1);
    auto rep = cal::homomorphism_check(the_ham("f"), the_ham("g"), params);
    std::vector<std::string> cols = {"cal_f",          "cal_g",
                                     "cal_compose",    "cal_inverse_f",
                                     "additivity_defect", "inverse_defect",
                                     "error_estimate"};
    std::vector<std::string> cells = {
        fmt(rep.cal_f),          fmt(rep.cal_g),          fmt(rep.cal_compose),
        fmt(rep.cal_inverse_f),  fmt(rep.additivity_defect),
        fmt(rep.inverse_defect), fmt(rep.error_estimate)};
    if (knobs.literal) {
      auto lit = cal::homomorphism_check(the_ham("f"), the_ham("g"), params,
                                         ham::AlgebraVariant::Literal);
      cols.push_back("additivity_defect_literal");
      cols.push_back("inverse_defect_literal");
      cells.push_back(fmt(lit.additivity_defect));
      cells.push_back(fmt(lit.inverse_defect));
    }
    csv.header(cols);
    csv.row(cells);
  } else if (kind == "commutator_study") {
    cal::QuadParams params;
    params.grid = knob_int(task, "grid", 48, knobs.grid, 8);
    params.time_steps = knob_int(task, "time_steps", 6, -1, 2);
    params.flow_steps = knob_int(task, "flow_steps", 24, knobs.steps, 1);
    auto deltas = knob_list(task, "deltas", {0.05, 0.1, 0.2});
    csv.header({"t", "cal_direct", "cal_law", "gap"});
    for (double d : deltas) {
      auto rep = cal::commutator_calabi(the_ham(), d, the_center(), params);
      csv.row({fmt(d), fmt(rep.direct), fmt(rep.law), fmt(rep.gap)});
    }
  } else if (kind == "extended_calabi") {
    const auto& H = the_ham();
    int grid = knob_int(task, "grid", 48, knobs.grid, 8);
    int trace_steps = knob_int(task, "trace_steps", 4, knobs.steps, 3);
    int flow_steps = knob_int(task, "flow_steps", 48, -1, 1);
    auto deltas = knob_list(task, "deltas", {0.2, 0.1, 0.05});
    const auto& mu = the_center();
    ham::MapRep phi = ham::MapRep::from_flow(H, 0.0, 1.0, flow_steps);
    double delta_max = *std::max_element(deltas.begin(), deltas.end());
    SupportBox box = SupportBox::hull(
        H.support, H.support.scaled_about(mu.center, std::exp(0.5 * delta_max)));
    box = box.expanded(0.1 * box.radius);
    auto ext = cal::extended_calabi_from_commutator(phi, mu, deltas, box, grid,
                                                    trace_steps, decl.n);
    cal::QuadParams params;
    params.grid = std::max(64, grid);
    double reference = cal::calabi_eq1(H, params).value;
    csv.header({"delta", "value", "extrapolated", "reference"});
    for (std::size_t i = 0; i < deltas.size(); ++i)
      csv.row({fmt(ext.deltas[i]), fmt(ext.values[i]), fmt(ext.extrapolated),
               fmt(reference)});
  } else if (kind == "counterexample") {
    const auto& H = the_ham();
    int grid = knob_int(task, "grid", 96, knobs.grid, 8);
    int samples = knob_int(task, "samples", 500, -1, 10);
    int flow_steps = knob_int(task, "flow_steps", 24, knobs.steps, 1);
    ham::MapRep phi = ham::MapRep::from_flow(H, 0.0, 1.0, flow_steps);
    SupportBox box = H.support.expanded(0.05 * H.support.radius);
    ham::MapRep id = ham::MapRep::identity(box);
    cal::QuadParams params;
    params.grid = grid;
    double base = 0.0;
    csv.header({"n", "iterates", "cal", "rel_drift", "c0_to_identity"});
    for (const auto& nj : task.value("n_list", std::vector<int>{1, 2, 3})) {
      int n = nj;
      auto gen_n = cal::counterexample_generator(H, n);
      double value = cal::calabi_eq1(gen_n, params).value;
      if (n == 1) base = value;
      double dist = ham::c0_distance(cal::counterexample_sequence(phi, n), id, box,
                                     samples, knobs.seed);
      csv.row({fmt(n), fmt(n * n * n * n), fmt(value),
               fmt(base != 0.0 ? std::abs(value - base) / std::abs(base) : 0.0),
               fmt(dist)});
    }
  } else if (kind == "genfun_roundtrip") {
    const auto& S = the_genfun();
    int samples = knob_int(task, "samples", 200, -1, 10);
    auto pts = geom::sample_box(S.support(), samples, knobs.seed);
    double worst = 0.0, symp = 0.0;
    for (const auto& z : pts) {
      Vec out = gen::psi_apply(S, z, solve);
      Vec back = gen::psi_inverse_apply(S, out, solve);
      for (std::size_t i = 0; i < z.size(); ++i)
        worst = std::max(worst, std::abs(back[i] - z[i]));
    }
    for (int k = 0; k < std::min(samples, 40); ++k) {
      auto J = geom::finite_difference_jacobian(
          [&](const Vec& w) { return gen::psi_apply(S, w, solve); }, pts[k], 1e-4);
      symp = std::max(symp, geom::conformal_defect(J, 1.0));
    }
    auto adm = gen::admissibility_check(S, 32);
    csv.header({"max_roundtrip", "symplectic_defect", "admissible", "min_slope"});
    csv.row({fmt(worst), fmt(symp), fmt(adm.pass ? 1 : 0), fmt(adm.min_slope)});
  } else if (kind == "genfun_from_map") {
    const auto& H = the_ham();
    double time = task.value("time", 0.1);
    int grid = knob_int(task, "grid", 256, knobs.grid, 16);
    int samples = knob_int(task, "samples", 200, -1, 10);
    int flow_steps = knob_int(task, "flow_steps", 40, knobs.steps, 1);
    ham::MapRep phi = ham::MapRep::from_flow(H, 0.0, time, flow_steps);
    SupportBox base_box = H.support.expanded(0.15 * H.support.radius);
    auto result = gen::genfun_from_map(phi, base_box, grid, solve);
    double worst = 0.0;
    for (const auto& z : geom::sample_box(H.support, samples, knobs.seed)) {
      Vec lhs = gen::psi_apply(result.S, z, solve);
      Vec rhs = phi.apply(z);
      for (std::size_t i = 0; i < z.size(); ++i)
        worst = std::max(worst, std::abs(lhs[i] - rhs[i]));
    }
    csv.header({"c0_error", "exactness_residual"});
    csv.row({fmt(worst), fmt(result.exactness_residual)});
  } else if (kind == "mollify_study") {
    const auto& S = the_genfun();
    int out_res = knob_int(task, "grid", 96, knobs.grid, 16);
    csv.header({"k", "c1_distance", "admissible", "min_slope"});
    for (const auto& kj : task.value("k_list", std::vector<int>{8, 16, 32})) {
      int k = kj;
      auto kernel = gen::MollifierKernel::radial(k, 2 * decl.n);
      auto Sk = gen::mollify(S, kernel, out_res);
      double c1 = 0.0;
      Vec g1(2 * decl.n), g2(2 * decl.n);
      for (const auto& b : geom::sample_box(S.support(), 200, knobs.seed)) {
        c1 = std::max(c1, std::abs(Sk.value(b) - S.value(b)));
        Sk.gradient(b, g1);
        S.gradient(b, g2);
        for (std::size_t i = 0; i < g1.size(); ++i)
          c1 = std::max(c1, std::abs(g1[i] - g2[i]));
      }
      auto adm = gen::admissibility_check(Sk, 32);
      csv.row({fmt(k), fmt(c1), fmt(adm.pass ? 1 : 0), fmt(adm.min_slope)});
    }
  } else if (kind == "hamilton_jacobi") {
    const auto& S = the_genfun();
    double t1 = task.value("t1", 0.3);
    int flow_steps = knob_int(task, "flow_steps", 40, knobs.steps, 1);
    int samples = knob_int(task, "samples", 30, -1, 5);
    gen::GeneratingPath path{
        [S](double t) {
          auto value = [S, t](std::span<const double> b) { return t * S.value(b); };
          auto gradient = [S, t](std::span<const double> b, std::span<double> g) {
            S.gradient(b, g);
            for (auto& v : g) v *= t;
          };
          return gen::GeneratingFunction::from_closure(value, gradient, S.support());
        },
        0.0, t1, t1 / 30.0};
    SupportBox box = S.support().expanded(0.1 * S.support().radius);
    auto sign = gen::resolve_hj_sign(path, box, flow_steps, samples, solve);
    csv.header({"sigma", "residual_plus", "residual_minus", "flow_match"});
    csv.row({fmt(sign.sigma), fmt(sign.residual_plus), fmt(sign.residual_minus),
             fmt(std::min(sign.residual_plus, sign.residual_minus))});
  } else if (kind == "rotation_calabi") {
    int grid = knob_int(task, "grid", 4096, knobs.grid, 64);
    auto res = rot::rotation_calabi_smooth(the_profile(), grid);
    csv.header({"value", "error_estimate"});
    csv.row({fmt(res.value), fmt(res.error_estimate)});
  } else if (kind == "rotation_commutator") {
    const auto& p = the_profile();
    int samples = knob_int(task, "samples", 500, -1, 10);
    geom::LiouvilleFlow mu{Vec(2, 0.0)};
    ham::MapRep phi = rot::rotation_map(p);
    csv.header({"t", "closed_vs_composed"});
    for (double t : knob_list(task, "t_list", {0.05, 0.1, 0.2})) {
      ham::MapRep closed = rot::rotation_commutator_map(p, t);
      SupportBox box = closed.support();
      ham::MapRep composed =
          ham::MapRep::compose({ham::MapRep::liouville(mu, t, box), phi,
                                ham::MapRep::liouville(mu, -t, box), phi.inverse()});
      csv.row({fmt(t), fmt(ham::c0_distance(closed, composed, box, samples, knobs.seed))});
    }
  } else if (kind == "rotation_recovered") {
    const auto& p = the_profile();
    double delta = task.value("delta", 0.2);
    int trace_steps = knob_int(task, "trace_steps", 480, knobs.steps, 3);
    int grid = knob_int(task, "grid", 320, knobs.grid, 32);
    int stride = knob_int(task, "slice_stride", 30, -1, 1);
    int samples = knob_int(task, "samples", 150, -1, 10);
    auto rec = rot::commutator_hamiltonian_recovered(p, delta, trace_steps, grid, stride);
    csv.header({"flow_match", "theta_variation", "closedness_residual",
                "extended_calabi"});
    csv.row({fmt(rot::recovered_flow_match(rec, p, delta, 32, samples, knobs.seed)),
             fmt(rot::recovered_theta_variation(rec)),
             fmt(rec.closedness_residual),
             fmt(cal::extended_calabi(rec.value_slices[0], 1).value)});
  } else if (kind == "singular_study") {
    const auto& p = the_profile();
    auto eps = knob_list(task, "eps_list", {0.1, 0.05, 0.025});
    double delta = task.value("delta", 0.1);
    int grid = knob_int(task, "grid", 96, knobs.grid, 16);
    int trace_steps = knob_int(task, "trace_steps", 6, knobs.steps, 3);
    int samples = knob_int(task, "samples", 400, -1, 10);
    auto report =
        rot::singular_profile_study(p, eps, delta, grid, trace_steps, samples, knobs.seed);
    csv.header({"eps", "map_distance", "ham_gap", "extended_calabi", "extended_gap"});
    for (const auto& row : report.rows)
      csv.row({fmt(row.eps), fmt(row.map_distance), fmt(row.ham_gap),
               fmt(row.extended_calabi), fmt(row.extended_gap)});
  } else if (kind == "angle_diagnostic") {
    const auto& p = the_profile();
    int samples = knob_int(task, "samples", 64, -1, 8);
    int levels = knob_int(task, "levels", 6, -1, 2);
    auto rep = rot::angle_bound_diagnostic(p, samples, levels);
    csv.header({"sup_angle", "obstructed", "first_estimate", "last_estimate"});
    csv.row({fmt(rep.sup_angle), fmt(rep.obstructed ? 1 : 0), fmt(rep.estimates.front()),
             fmt(rep.estimates.back())});
  } else {
    throw SchemaError("task " + std::to_string(index) + ": unknown kind '" + kind + "'");
  }
  return csv_path;
}

}  // namespace

RunResult run_scenario(const std::string& scenario_path, const std::string& out_dir,
                       const RunKnobs& knobs) {
  auto wall_start = std::chrono::steady_clock::now();
  if (knobs.serial) par::set_max_threads(1);

  std::ifstream in(scenario_path);
  if (!in) throw SchemaError("cannot open scenario '" + scenario_path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string raw = buffer.str();

  json root;
  try {
    root = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("scenario JSON: ") + e.what());
  }

  Declarations decl;
  try {
    decl = parse_declarations(root, raw);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("scenario schema: ") + e.what());
  }

  std::filesystem::create_directories(out_dir);
  RunResult result;

  json manifest;
  manifest["version"] = "calinv 0.1.0";
  manifest["scenario"] = scenario_path;
  manifest["seed"] = knobs.seed;
  manifest["serial"] = knobs.serial;
  manifest["overrides"] = {{"grid", knobs.grid}, {"steps", knobs.steps},
                           {"tol", knobs.tol}};
  manifest["conventions"] = {
      {"iota_sign", ham::conventions().iota_sign},
      {"hj_sigma", ham::conventions().hj_sigma},
      {"generator_algebra",
       knobs.literal ? "validated (literal columns emitted)" : "validated"},
      {"volume_form", "top power of omega = standard Lebesgue volume"},
      {"sampling", "halton, start index = seed*7919 + 1"},
  };

  const json tasks = root.value("tasks", json::array());
  int index = 0;
  for (const auto& task : tasks) {
    TaskReport rep;
    rep.index = index;
    if (!task.contains("kind"))
      throw SchemaError("task " + std::to_string(index) + ": missing 'kind'");
    rep.kind = task.at("kind").get<std::string>();
    auto t0 = std::chrono::steady_clock::now();
    try {
      rep.csv = run_task(decl, task, index, out_dir, knobs);
      rep.status = "ok";
    } catch (const SchemaError&) {
      throw;  // schema problems abort the whole run with exit 2
    } catch (const json::exception& e) {
      throw SchemaError("task " + std::to_string(index) + ": " + e.what());
    } catch (const std::exception& e) {
      rep.status = e.what();
      result.exit_code = kExitNumerical;
    }
    rep.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.tasks.push_back(rep);
    ++index;
  }

  json jtasks = json::array();
  for (const auto& t : result.tasks)
    jtasks.push_back({{"index", t.index},
                      {"kind", t.kind},
                      {"csv", t.csv},
                      {"status", t.status},
                      {"seconds", t.seconds}});
  manifest["tasks"] = jtasks;
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
          .count();

  result.manifest = out_dir + "/manifest.json";
  std::ofstream mf(result.manifest);
  mf << manifest.dump(2) << "\n";
  return result;
}

}  // namespace calinv::cli
