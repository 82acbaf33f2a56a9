#include "hcd/experiments.hpp"

#include "hcd/sparse_ldlt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace hcd {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kArtifactVersion = "1.0.0";
constexpr double kJ01Sq = 5.783185962946784;  // first zero of J_0, squared

// --- config parsing -------------------------------------------------------------

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
    if (!j.is_object())
        throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            ok = ok || it.key() == a;
        if (!ok)
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& dst, const std::string& where)
{
    if (!j.contains(key))
        return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

Mat2 read_mat(const json& v, const std::string& where)
{
    if (v.is_number())
        return v.get<double>() * Mat2::Identity();
    if (!v.is_array() || v.size() != 2 || !v[0].is_array() || !v[1].is_array() || v[0].size() != 2 ||
        v[1].size() != 2)
        throw ConfigError(where + ": expected a number or [[a,b],[c,d]]");
    Mat2 m;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            m(r, c) = v[r][c].get<double>();
    return m;
}

json write_mat(const Mat2& m)
{
    return json::array({json::array({m(0, 0), m(0, 1)}), json::array({m(1, 0), m(1, 1)})});
}

Interval read_interval(const json& v, const std::string& where)
{
    if (!v.is_array() || v.size() != 2)
        throw ConfigError(where + ": expected [lo, hi]");
    return {v[0].get<double>(), v[1].get<double>()};
}

bool is_integer_multiple(double a, double b)
{
    const double q = a / b;
    return std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::abs(q));
}

std::vector<double> descending(std::vector<double> v)
{
    std::sort(v.begin(), v.end(), std::greater<>());
    return v;
}

// Reference resolution for the Dirichlet checks: width/128 rounded to a power-of-two
// division of the cell.
double reference_h(const Shape& s, double cell_side)
{
    const double target = 2.0 * s.radius / 128.0;
    const int k = static_cast<int>(std::ceil(std::log2(cell_side / target)));
    return cell_side / std::ldexp(1.0, k);
}

std::string short_hash(const std::string& h) { return h.substr(0, 16); }

std::string fmt(double v)
{
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

} // namespace

// --- ExperimentConfig -----------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const json& j)
{
    ExperimentConfig c;
    c.raw = j;
    check_keys(j,
               {"name", "geometry", "defect", "A1", "epsilons", "seeds", "box_half_width", "mesh", "modes",
                "lambda", "beta_inf", "homogenization", "quasimode", "decay", "ess_spec", "solver",
                "defect_solver", "assertions"},
               "config");
    read(j, "name", c.name, "config");

    if (j.contains("geometry")) {
        const auto& g = j["geometry"];
        check_keys(g, {"shape", "cell_size", "r_min", "r_max", "jitter", "jitter_quantum", "buffer_gap"},
                   "geometry");
        if (g.contains("shape"))
            c.medium.shape = shape_kind_from_string(g["shape"].get<std::string>());
        read(g, "cell_size", c.medium.cell_size, "geometry");
        read(g, "r_min", c.medium.r_min, "geometry");
        read(g, "r_max", c.medium.r_max, "geometry");
        read(g, "jitter", c.medium.jitter, "geometry");
        read(g, "jitter_quantum", c.medium.jitter_quantum, "geometry");
        read(g, "buffer_gap", c.medium.buffer_gap, "geometry");
    }
    if (j.contains("A1"))
        c.A1 = read_mat(j["A1"], "A1");
    c.defect.A2 = c.A1;
    if (j.contains("defect")) {
        const auto& d = j["defect"];
        check_keys(d, {"radius", "A2"}, "defect");
        if (d.contains("radius")) {
            if (d["radius"].is_string()) {
                if (d["radius"].get<std::string>() != "auto")
                    throw ConfigError("defect.radius: expected a number or \"auto\"");
                c.tune_defect_radius = true;
                c.defect.radius = 0.5;
            } else {
                c.defect.radius = d["radius"].get<double>();
            }
        }
        if (d.contains("A2"))
            c.defect.A2 = read_mat(d["A2"], "defect.A2");
    }
    read(j, "epsilons", c.epsilons, "config");
    read(j, "seeds", c.seeds, "config");
    read(j, "box_half_width", c.box_half_width, "config");

    if (j.contains("mesh")) {
        const auto& m = j["mesh"];
        check_keys(m, {"cells_per_unit", "macro_h"}, "mesh");
        read(m, "cells_per_unit", c.cells_per_unit, "mesh");
        read(m, "macro_h", c.macro_h, "mesh");
    }
    if (j.contains("modes")) {
        const auto& m = j["modes"];
        check_keys(m, {"count", "min_across", "fine_count", "fine_cells_per_unit", "mc_samples", "mc_seed"},
                   "modes");
        read(m, "count", c.modes, "modes");
        read(m, "min_across", c.mode_min_across, "modes");
        read(m, "fine_count", c.fine_modes, "modes");
        read(m, "fine_cells_per_unit", c.fine_cells_per_unit, "modes");
        read(m, "mc_samples", c.mc_samples, "modes");
        read(m, "mc_seed", c.mc_seed, "modes");
    }
    if (j.contains("lambda")) {
        const auto& l = j["lambda"];
        check_keys(l, {"range", "step", "gap_margin"}, "lambda");
        if (l.contains("range"))
            c.lambda_range = read_interval(l["range"], "lambda.range");
        read(l, "step", c.lambda_step, "lambda");
        read(l, "gap_margin", c.gap_margin, "lambda");
    }
    if (j.contains("beta_inf")) {
        const auto& b = j["beta_inf"];
        check_keys(b, {"region", "windows", "seed"}, "beta_inf");
        read(b, "region", c.beta_inf_region, "beta_inf");
        read(b, "windows", c.beta_inf_windows, "beta_inf");
        read(b, "seed", c.beta_inf_seed, "beta_inf");
    }
    if (j.contains("homogenization")) {
        const auto& h = j["homogenization"];
        check_keys(h, {"cells", "samples", "seed"}, "homogenization");
        read(h, "cells", c.hom_cells, "homogenization");
        read(h, "samples", c.hom_samples, "homogenization");
        read(h, "seed", c.hom_seed, "homogenization");
    }
    if (j.contains("quasimode")) {
        const auto& q = j["quasimode"];
        check_keys(q, {"L0", "rho0", "window_factor", "projection_steps"}, "quasimode");
        read(q, "L0", c.schedule.L0, "quasimode");
        read(q, "rho0", c.schedule.rho0, "quasimode");
        read(q, "window_factor", c.window_factor, "quasimode");
        read(q, "projection_steps", c.projection_steps, "quasimode");
    }
    if (j.contains("decay")) {
        const auto& d = j["decay"];
        check_keys(d, {"r_in", "r_out", "width"}, "decay");
        read(d, "r_in", c.decay_r_in, "decay");
        read(d, "r_out", c.decay_r_out, "decay");
        read(d, "width", c.decay_width, "decay");
    }
    if (j.contains("ess_spec")) {
        const auto& e = j["ess_spec"];
        check_keys(e, {"epsilon", "cells_per_unit", "bands", "control_radius"}, "ess_spec");
        read(e, "epsilon", c.ess_epsilon, "ess_spec");
        read(e, "cells_per_unit", c.ess_cells_per_unit, "ess_spec");
        read(e, "control_radius", c.ess_control_radius, "ess_spec");
        if (e.contains("bands")) {
            c.ess_bands.clear();
            for (const auto& b : e["bands"])
                c.ess_bands.push_back(read_interval(b, "ess_spec.bands"));
        }
    }
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        check_keys(s, {"tol", "k_max", "max_restarts", "seed", "memory_budget"}, "solver");
        read(s, "tol", c.solver.tol, "solver");
        read(s, "k_max", c.solver.k_max, "solver");
        read(s, "max_restarts", c.solver.max_restarts, "solver");
        read(s, "seed", c.solver.seed, "solver");
        read(s, "memory_budget", c.solver.memory_budget, "solver");
    }
    if (j.contains("defect_solver")) {
        const auto& s = j["defect_solver"];
        check_keys(s, {"m_max", "root_tol", "trace_points", "end_margin"}, "defect_solver");
        read(s, "m_max", c.defect_options.m_max, "defect_solver");
        read(s, "root_tol", c.defect_options.root_tol, "defect_solver");
        read(s, "trace_points", c.defect_options.trace_points, "defect_solver");
        read(s, "end_margin", c.defect_options.end_margin, "defect_solver");
    }
    read(j, "assertions", c.assertions, "config");
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

ordered_json ExperimentConfig::to_json() const
{
    ordered_json j;
    j["name"] = name;
    j["geometry"] = {{"shape", to_string(medium.shape)},     {"cell_size", medium.cell_size},
                     {"r_min", medium.r_min},                {"r_max", medium.r_max},
                     {"jitter", medium.jitter},              {"jitter_quantum", medium.jitter_quantum},
                     {"buffer_gap", medium.buffer_gap}};
    j["defect"] = ordered_json::object();
    if (tune_defect_radius)
        j["defect"]["radius"] = "auto";
    else
        j["defect"]["radius"] = defect.radius;
    j["defect"]["A2"] = write_mat(defect.A2);
    j["A1"] = write_mat(A1);
    j["epsilons"] = epsilons;
    j["seeds"] = seeds;
    j["box_half_width"] = box_half_width;
    j["mesh"] = {{"cells_per_unit", cells_per_unit}, {"macro_h", macro_h}};
    j["modes"] = {{"count", modes},
                  {"min_across", mode_min_across},
                  {"fine_count", fine_modes},
                  {"fine_cells_per_unit", fine_cells_per_unit},
                  {"mc_samples", mc_samples},
                  {"mc_seed", mc_seed}};
    j["lambda"] = {{"range", {lambda_range.lo, lambda_range.hi}}, {"step", lambda_step}, {"gap_margin", gap_margin}};
    j["beta_inf"] = {{"region", beta_inf_region}, {"windows", beta_inf_windows}, {"seed", beta_inf_seed}};
    j["homogenization"] = {{"cells", hom_cells}, {"samples", hom_samples}, {"seed", hom_seed}};
    j["quasimode"] = {{"L0", schedule.L0},
                      {"rho0", schedule.rho0},
                      {"window_factor", window_factor},
                      {"projection_steps", projection_steps}};
    j["decay"] = {{"r_in", decay_r_in}, {"r_out", decay_r_out}, {"width", decay_width}};
    ordered_json bands = ordered_json::array();
    for (const auto& b : ess_bands)
        bands.push_back({b.lo, b.hi});
    j["ess_spec"] = {{"epsilon", ess_epsilon},
                     {"cells_per_unit", ess_cells_per_unit},
                     {"bands", bands},
                     {"control_radius", ess_control_radius}};
    j["solver"] = {{"tol", solver.tol},
                   {"k_max", solver.k_max},
                   {"max_restarts", solver.max_restarts},
                   {"seed", solver.seed},
                   {"memory_budget", solver.memory_budget}};
    j["defect_solver"] = {{"m_max", defect_options.m_max},
                          {"root_tol", defect_options.root_tol},
                          {"trace_points", defect_options.trace_points},
                          {"end_margin", defect_options.end_margin}};
    j["assertions"] = assertions;
    return j;
}

std::string ExperimentConfig::hash() const { return io::sha256_hex(to_json().dump()); }

void ExperimentConfig::validate() const
{
    medium.validate();
    if (!tune_defect_radius)
        defect.validate();
    else if (!is_spd(defect.A2))
        throw ConstraintViolation("A2 must be symmetric positive definite");
    if (!is_spd(A1))
        throw ConstraintViolation("A1 must be symmetric positive definite");
    if (epsilons.empty())
        throw ConfigError("epsilons must be non-empty");
    if (seeds.empty())
        throw ConfigError("seeds must be non-empty");
    if (!(box_half_width > 0.0))
        throw ConfigError("box_half_width must be positive");
    if (cells_per_unit < 4)
        throw ConfigError("mesh.cells_per_unit must be at least 4");
    for (double e : epsilons) {
        if (!(e > 0.0 && e <= 1.0))
            throw ConfigError("every epsilon must lie in (0, 1]");
        // the eps-lattice and the eps-mesh must both tile the box
        if (!is_integer_multiple(box_half_width, e))
            throw ConfigError("box_half_width must be a multiple of every epsilon");
    }
    for (double e : epsilons) {
        const double rho = schedule.rho(e);
        if (rho < 2.0 * e / cells_per_unit)
            throw ConfigError("quasimode schedule: rho(eps) must be at least two mesh cells");
        if (!tune_defect_radius && 0.5 * schedule.L(e) < defect.radius + 2.0 * rho)
            throw ConfigError("quasimode schedule: L(eps)/2 must exceed R + 2 rho(eps) for every eps");
    }
    const double h_ref = 1.0 / cells_per_unit;
    const double r_floor = medium.r_min / 4.0;
    if (h_ref > r_floor + 1e-15)
        throw ConstraintViolation("mesh.cells_per_unit too small: h must be at most r_min/4 on the unit cell");
    if (medium.jitter_quantum > 0.0 && !is_integer_multiple(medium.jitter_quantum, h_ref))
        throw ConfigError("geometry.jitter_quantum must be a multiple of 1/cells_per_unit");
    if (!(macro_h > 0.0) || !is_integer_multiple(box_half_width, macro_h))
        throw ConfigError("mesh.macro_h must divide box_half_width");
    if (modes < 1 || fine_modes < 1 || mc_samples < 1)
        throw ConfigError("modes.count, modes.fine_count and modes.mc_samples must be positive");
    if (fine_cells_per_unit < cells_per_unit)
        throw ConfigError("modes.fine_cells_per_unit must be at least mesh.cells_per_unit");
    if (lambda_range.empty() || !(lambda_step > 0.0))
        throw ConfigError("lambda.range must be increasing and lambda.step positive");
    if (!(gap_margin >= 0.0 && gap_margin < 0.5))
        throw ConfigError("lambda.gap_margin must lie in [0, 1/2)");
    if (beta_inf_windows.empty())
        throw ConfigError("beta_inf.windows must be non-empty");
    for (double L : beta_inf_windows)
        if (!(L >= 1.0) || L > 0.5 * beta_inf_region)
            throw ConfigError("beta_inf.windows must lie in [1, region/2]");
    if (hom_cells < 1 || hom_samples < 2)
        throw ConfigError("homogenization needs at least 1 cell and 2 samples");
    if (!(window_factor > 2.0))
        throw ConfigError("quasimode.window_factor must exceed 2");
    if (projection_steps < 4)
        throw ConfigError("quasimode.projection_steps must be at least 4");
    if (!(decay_width > 0.0) || decay_r_out > box_half_width || decay_r_in < 0.0 ||
        std::floor((decay_r_out - decay_r_in) / decay_width + 1e-9) < 3)
        throw ConfigError("decay annuli: need at least 3 of the given width inside the box");
    if (!tune_defect_radius && defect.radius >= decay_r_in)
        throw ConfigError("decay.r_in must exceed the defect radius");
    if (!(ess_epsilon > 0.0) || !is_integer_multiple(box_half_width, ess_epsilon))
        throw ConfigError("ess_spec.epsilon must divide box_half_width");
    if (ess_cells_per_unit.size() < 2)
        throw ConfigError("ess_spec.cells_per_unit needs at least two refinement levels");
    for (int cpu : ess_cells_per_unit)
        if (1.0 / cpu > r_floor + 1e-15)
            throw ConstraintViolation("ess_spec.cells_per_unit too small: h must be at most r_min/4 on the unit cell");
    if (ess_bands.empty())
        throw ConfigError("ess_spec.bands must be non-empty");
    for (const auto& b : ess_bands)
        if (b.empty())
            throw ConfigError("ess_spec.bands must be increasing intervals");
    const auto& known = known_assertions();
    for (const auto& a : assertions)
        if (std::find(known.begin(), known.end(), a) == known.end())
            throw ConfigError("unknown assertion '" + a + "'");
}

const std::vector<std::string>& known_assertions()
{
    static const std::vector<std::string> names{
        "dirichlet_oracle", "beta_identities", "gap_certified",       "homogenized_tensor",
        "defect_convergence", "uniform_decay", "two_scale",           "projection_bound",
        "essential_spectrum", "determinism"};
    return names;
}

std::vector<std::string> stages_for_assertion(const std::string& name)
{
    if (name == "dirichlet_oracle" || name == "beta_identities")
        return {"gap"};
    if (name == "homogenized_tensor")
        return {"hom"};
    if (name == "gap_certified" || name == "defect_convergence" || name == "uniform_decay" ||
        name == "two_scale" || name == "projection_bound")
        return {"gap", "hom", "defect", "cells"};
    if (name == "essential_spectrum")
        return {"gap", "hom", "defect", "ess"};
    if (name == "determinism")
        return {"determinism"};
    throw ConfigError("unknown assertion '" + name + "'");
}

std::vector<std::string> stages_for_command(const std::string& command)
{
    if (command == "gap-scan")
        return {"gap"};
    if (command == "homogenize")
        return {"hom"};
    if (command == "defect-converge" || command == "decay")
        return {"gap", "hom", "defect", "cells"};
    if (command == "ess-spec")
        return {"gap", "hom", "defect", "ess"};
    if (command == "all")
        return {"gap", "hom", "defect", "cells", "ess", "determinism"};
    throw ConfigError("unknown command '" + command + "'");
}

ExperimentConfig reduced_config(const ExperimentConfig& cfg)
{
    ExperimentConfig r = cfg;
    auto eps = descending(cfg.epsilons);
    eps.resize(std::min<std::size_t>(2, eps.size()));
    r.epsilons = eps;
    r.seeds = {cfg.seeds.front()};
    r.assertions.clear();
    r.name = cfg.name + "-reduced";
    r.raw = r.to_json();
    return r;
}

// --- Campaign -------------------------------------------------------------------

Campaign::Campaign(ExperimentConfig cfg, fs::path out_dir, bool verbose)
    : cfg_(std::move(cfg)), out_(std::move(out_dir)), verbose_(verbose)
{
    cfg_.validate();
    hash_ = cfg_.hash();
}

void Campaign::log(const std::string& msg) const
{
    if (verbose_)
        std::cerr << "[" << cfg_.name << "] " << msg << std::endl;
}

void Campaign::write_csv(const std::string& rel, const io::CsvTable& t)
{
    const std::string text = t.str();
    io::write_file(out_ / rel, text);
    files_[rel] = io::sha256_hex(text);
}

void Campaign::timed(const std::string& stage, const std::function<void()>& f)
{
    const auto t0 = std::chrono::steady_clock::now();
    log(stage + " ...");
    f();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    timings_.push_back({stage, s});
    std::ostringstream msg;
    msg << stage << " done in " << s << " s";
    log(msg.str());
}

std::vector<std::string> Campaign::written() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : files_)
        out.push_back(k);
    return out;
}

namespace {

std::vector<std::string> with_provenance(std::vector<std::string> cols)
{
    cols.insert(cols.begin(), {"config_hash", "stage", "seed"});
    return cols;
}

std::vector<io::Cell> row(const std::string& hash, const std::string& stage, std::int64_t seed,
                          std::vector<io::Cell> rest)
{
    rest.insert(rest.begin(), {io::Cell{short_hash(hash)}, io::Cell{stage}, io::Cell{seed}});
    return rest;
}

} // namespace

const GapScanResult& Campaign::gap_scan()
{
    if (gap_)
        return *gap_;
    GapScanResult g;
    timed("gap-scan", [&] {
        const auto& m = cfg_.medium;
        const Shape ref{m.shape, {0.5, 0.5}, m.r_max};
        g.cell_table = std::make_shared<const DirichletModeTable>(
            dirichlet_modes(ref, 1.0 / cfg_.cells_per_unit, cfg_.modes, 1.0, cfg_.mode_min_across, false));
        g.fine_table = std::make_shared<const DirichletModeTable>(
            dirichlet_modes(ref, 1.0 / cfg_.fine_cells_per_unit, cfg_.fine_modes, 1.0, 16.0, false));
        g.ensemble = make_ensemble(g.cell_table, m, cfg_.mc_samples, cfg_.mc_seed);
        g.fine_ensemble = make_ensemble(g.fine_table, m, cfg_.mc_samples, cfg_.mc_seed);
        g.beta_gaps = gap_intervals(g.ensemble, cfg_.lambda_range, cfg_.lambda_step);
        g.fine_gaps = gap_intervals(g.fine_ensemble, cfg_.lambda_range, cfg_.lambda_step);
        g.beta_inf = std::make_shared<BetaInfinityEstimator>(g.cell_table, m, cfg_.beta_inf_region,
                                                             cfg_.beta_inf_seed);
        g.G_gaps = gap_set_G(*g.beta_inf, cfg_.beta_inf_windows, cfg_.lambda_range, cfg_.lambda_step);
        g.selected = Interval{1.0, 0.0};
        for (const auto& gap : g.G_gaps.gaps)
            if (gap.lo > 0.0) {
                g.selected = gap;
                break;
            }

        // Dirichlet spectra against closed forms
        {
            const Shape disk{ShapeKind::Disk, {1.25, 1.25}, 1.0};
            const Shape square{ShapeKind::Square, {0.5, 0.5}, 0.25};
            const std::pair<Shape, double> cases[] = {{disk, 2.5}, {square, 1.0}};
            const double exact[] = {kJ01Sq, 8.0 * std::numbers::pi * std::numbers::pi};
            const char* names[] = {"unit_disk", "square_half"};
            for (int k = 0; k < 2; ++k) {
                const auto& [s, side] = cases[k];
                const double h = reference_h(s, side);
                const auto t = dirichlet_modes(s, h, 1, side, 16.0, true);
                DirichletCheck c;
                c.shape = names[k];
                c.h = h;
                c.lambda1 = t.lambda1();
                c.lambda1_half_h = t.lambda1_half_h;
                c.exact = exact[k];
                c.rel_error = std::abs(c.lambda1 - c.exact) / c.exact;
                c.rel_error_half_h = std::abs(c.lambda1_half_h - c.exact) / c.exact;
                g.dirichlet.push_back(c);
            }
        }

        // beta identities
        {
            for (const auto* ens : {&g.ensemble, &g.fine_ensemble}) {
                BetaCheck c;
                c.kind = "beta_zero";
                c.shape = ens == &g.ensemble ? "cell_table" : "fine_table";
                c.value = beta(*ens, 0.0).value;
                c.reference = 0.0;
                c.rel_error = std::abs(c.value);
                g.beta_checks.push_back(c);
            }
            std::mt19937_64 rng(cfg_.mc_seed ^ 0xbe7aull);
            std::uniform_real_distribution<double> U(0.0, 1.0);
            for (int k = 0; k < 5; ++k) {
                const bool disk = k % 2 == 0;
                const double r = disk ? 0.2 + 0.15 * U(rng) : 0.15 + 0.15 * U(rng);
                const Shape s{disk ? ShapeKind::Disk : ShapeKind::Square, {0.5, 0.5}, r};
                const auto t = dirichlet_modes(s, 1.0 / 128.0, 20, 1.0, 16.0, false);
                const auto poles = t.poles();
                double lam = 0.0;
                for (;;) {
                    lam = (0.1 + 1.7 * U(rng)) * t.lambda1();
                    bool near = false;
                    for (double p : poles)
                        near = near || std::abs(lam - p) < 0.05 * t.lambda1();
                    if (!near)
                        break;
                }
                BetaCheck c;
                c.kind = "expansion_vs_direct";
                std::ostringstream name;
                name << (disk ? "disk" : "square") << ":" << r;
                c.shape = name.str();
                c.lambda = lam;
                c.value = b_integral(t, lam).value;
                c.reference = b_integral_direct(t, lam);
                c.rel_error = std::abs(c.value - c.reference) / std::abs(c.reference);
                g.beta_checks.push_back(c);
            }
            {
                const double r = 0.3;
                std::shared_ptr<const DirichletModeTable> t = g.fine_table;
                if (!(m.shape == ShapeKind::Disk && m.r_max == r))
                    t = std::make_shared<const DirichletModeTable>(dirichlet_modes(
                        Shape{ShapeKind::Disk, {0.5, 0.5}, r}, 1.0 / cfg_.fine_cells_per_unit, 1, 1.0, 16.0, false));
                BetaCheck c;
                c.kind = "pole_location";
                c.shape = "disk:0.3";
                c.value = t->poles().front();
                c.reference = kJ01Sq / (r * r);
                c.lambda = c.value;
                c.rel_error = std::abs(c.value - c.reference) / c.reference;
                g.beta_checks.push_back(c);
            }
        }
    });

    // tables
    const std::string st = "gap-scan";
    for (auto [ens, rel] : {std::pair{&g.ensemble, "gap/beta_cell.csv"}, std::pair{&g.fine_ensemble, "gap/beta_fine.csv"}}) {
        std::vector<double> grid;
        const int n = static_cast<int>(std::floor(cfg_.lambda_range.width() / cfg_.lambda_step + 1e-9));
        for (int i = 0; i <= n; ++i)
            grid.push_back(cfg_.lambda_range.lo + i * cfg_.lambda_step);
        const auto tab = tabulate_beta(*ens, grid);
        io::CsvTable t(with_provenance({"lambda", "beta", "stderr"}));
        for (std::size_t i = 0; i < tab.lambda.size(); ++i)
            t.add(row(hash_, st, -1, {tab.lambda[i], tab.beta[i], tab.stderr_[i]}));
        write_csv(rel, t);
    }
    {
        // beta_inf on a coarser grid, away from the pole bands
        const auto poles = g.beta_inf->pole_bands();
        io::CsvTable t(with_provenance({"lambda", "window", "sup_ell", "beta"}));
        const double step = 10.0 * cfg_.lambda_step;
        const int n = static_cast<int>(std::floor(cfg_.lambda_range.width() / step + 1e-9));
        for (int i = 0; i <= n; ++i) {
            const double lam = cfg_.lambda_range.lo + i * step;
            bool near = false;
            for (const auto& p : poles)
                near = near || p.contains(lam);
            if (near)
                continue;
            const auto e = g.beta_inf->estimate(lam, cfg_.beta_inf_windows);
            const double b = beta(g.ensemble, lam).value;
            for (std::size_t k = 0; k < e.Ls.size(); ++k)
                t.add(row(hash_, st, static_cast<std::int64_t>(cfg_.beta_inf_seed), {lam, e.Ls[k], e.sup_values[k], b}));
        }
        write_csv("gap/beta_inf.csv", t);
    }
    {
        io::CsvTable t(with_provenance({"set", "index", "lo", "hi", "selected"}));
        for (auto [set, name] : {std::pair{&g.beta_gaps, "beta_cell"}, std::pair{&g.fine_gaps, "beta_fine"},
                                 std::pair{&g.G_gaps, "G"}}) {
            for (std::size_t i = 0; i < set->gaps.size(); ++i) {
                const auto& gp = set->gaps[i];
                const bool sel = set == &g.G_gaps && gp.lo == g.selected.lo && gp.hi == g.selected.hi;
                t.add(row(hash_, st, -1, {std::string(name), static_cast<std::int64_t>(i), gp.lo, gp.hi,
                                          static_cast<std::int64_t>(sel)}));
            }
        }
        write_csv("gap/gaps.csv", t);
    }
    {
        io::CsvTable t(with_provenance({"table", "index", "eigenvalue", "mean"}));
        for (auto [tab, name] : {std::pair{g.cell_table.get(), "cell"}, std::pair{g.fine_table.get(), "fine"}})
            for (int i = 0; i < tab->count(); ++i)
                t.add(row(hash_, st, -1, {std::string(name), static_cast<std::int64_t>(i), tab->eigenvalues[i],
                                          tab->means[i]}));
        write_csv("gap/modes.csv", t);
    }
    {
        io::CsvTable t(with_provenance({"shape", "h", "lambda1", "lambda1_half_h", "exact", "rel_error",
                                        "rel_error_half_h"}));
        for (const auto& c : g.dirichlet)
            t.add(row(hash_, st, -1, {c.shape, c.h, c.lambda1, c.lambda1_half_h, c.exact, c.rel_error,
                                      c.rel_error_half_h}));
        write_csv("gap/dirichlet_check.csv", t);
        io::CsvTable b(with_provenance({"kind", "shape", "lambda", "value", "reference", "rel_error"}));
        for (const auto& c : g.beta_checks)
            b.add(row(hash_, st, -1, {c.kind, c.shape, c.lambda, c.value, c.reference, c.rel_error}));
        write_csv("gap/beta_check.csv", b);
    }
    gap_ = std::move(g);
    return *gap_;
}

const HomogenizeResult& Campaign::homogenize()
{
    if (hom_)
        return *hom_;
    HomogenizeResult r;
    timed("homogenize", [&] {
        const double h = 1.0 / cfg_.cells_per_unit;
        r.tensor = homogenized_tensor(cfg_.medium, cfg_.A1, cfg_.hom_cells, h, cfg_.hom_samples, cfg_.hom_seed);
        InclusionRealization empty;
        empty.region = Box{0.0, 0.0, static_cast<double>(cfg_.hom_cells), static_cast<double>(cfg_.hom_cells)};
        empty.spec = cfg_.medium;
        r.zero_fraction = effective_tensor(corrector_cells(empty, cfg_.A1, h), cfg_.A1);
    });
    const std::string st = "homogenize";
    io::CsvTable t(with_provenance({"kind", "index", "volume_fraction", "a00", "a01", "a11"}));
    const auto& T = r.tensor;
    for (std::size_t i = 0; i < T.samples.size(); ++i) {
        const auto& a = T.samples[i];
        t.add(row(hash_, st, static_cast<std::int64_t>(cfg_.hom_seed + i),
                  {std::string("sample"), static_cast<std::int64_t>(i), T.volume_fractions[i], a(0, 0), a(0, 1),
                   a(1, 1)}));
    }
    auto add = [&](const std::string& kind, const Mat2& a, double f) {
        t.add(row(hash_, st, -1, {kind, std::int64_t{-1}, f, a(0, 0), a(0, 1), a(1, 1)}));
    };
    add("mean", T.A, T.volume_fraction);
    add("stderr", T.stderr_, T.volume_fraction);
    add("voigt", T.voigt, T.volume_fraction);
    add("reuss", T.reuss, T.volume_fraction);
    add("hashin_shtrikman", T.hashin_shtrikman * Mat2::Identity(), T.volume_fraction);
    add("zero_fraction", r.zero_fraction, 0.0);
    add("A1", cfg_.A1, 0.0);
    write_csv("hom/tensor.csv", t);
    hom_ = std::move(r);
    return *hom_;
}

const DefectResult& Campaign::defect_modes()
{
    if (defect_)
        return *defect_;
    const auto& g = gap_scan();
    const auto& hm = homogenize();
    if (g.selected.empty())
        throw DomainError("no gap found in the scanned range: campaign halts (see gap/gaps.csv)");
    DefectResult d;
    const Interval shrunk = g.selected.shrunk(cfg_.gap_margin);
    const auto& ens = g.ensemble;
    auto beta_fn = [&ens](double l) { return beta(ens, l).value; };
    const double a = 0.5 * hm.tensor.A.trace();
    const double a2 = 0.5 * cfg_.defect.A2.trace();
    io::CsvTable tune(with_provenance({"radius", "roots_in_gap", "lambda", "distance_to_centre", "chosen"}));
    timed("defect", [&] {
        d.radius = cfg_.defect.radius;
        if (cfg_.tune_defect_radius) {
            double best = std::numeric_limits<double>::infinity();
            std::vector<std::tuple<double, int, double, double>> rows;
            for (int k = 0; k <= 14; ++k) {
                const double R = 0.25 + 0.05 * k;
                if (R >= cfg_.decay_r_in)
                    break;
                const auto roots = radial_oracle(a, a2, R, beta_fn, shrunk, cfg_.defect_options.m_max);
                double lam = std::numeric_limits<double>::quiet_NaN();
                double dist = std::numeric_limits<double>::infinity();
                if (roots.size() == 1 && roots.front().angular == 0) {
                    lam = roots.front().lambda;
                    dist = std::abs(lam - shrunk.center());
                    if (dist < best) {
                        best = dist;
                        d.radius = R;
                    }
                }
                rows.emplace_back(R, static_cast<int>(roots.size()), lam, dist);
            }
            if (!std::isfinite(best))
                throw DomainError("defect radius tuning: no radius places a single mode in the gap");
            for (const auto& [R, n, lam, dist] : rows)
                tune.add(row(hash_, "defect", -1, {R, static_cast<std::int64_t>(n), lam, dist,
                                                   static_cast<std::int64_t>(R == d.radius)}));
        }
        DefectSpec spec = cfg_.defect;
        spec.radius = d.radius;
        spec.validate();
        auto macro = std::make_shared<const MacroProblem>(
            assemble_macro(hm.tensor.A, spec, Box::centered(cfg_.box_half_width), cfg_.macro_h));
        d.solution = defect_eigenproblem(macro, ens, g.selected, cfg_.defect_options, cfg_.solver);
        d.oracle = radial_oracle(a, a2, d.radius, beta_fn, g.selected, cfg_.defect_options.m_max);
        for (const auto& p : d.solution.pairs)
            d.beta_inf_at_root.push_back((*g.beta_inf)(p.lambda0, cfg_.beta_inf_windows));
    });
    const std::string st = "defect";
    if (cfg_.tune_defect_radius)
        write_csv("defect/radius_tuning.csv", tune);
    io::CsvTable t(with_provenance({"root", "lambda0", "in_shrunk_gap", "multiplicity", "branch", "beta",
                                    "beta_inf", "theta", "residual", "energy_defect", "radius"}));
    for (std::size_t i = 0; i < d.solution.pairs.size(); ++i) {
        const auto& p = d.solution.pairs[i];
        t.add(row(hash_, st, -1,
                  {static_cast<std::int64_t>(i), p.lambda0, static_cast<std::int64_t>(shrunk.contains(p.lambda0)),
                   static_cast<std::int64_t>(p.multiplicity), static_cast<std::int64_t>(p.branch), p.beta,
                   d.beta_inf_at_root[i], p.theta, p.residual, p.energy_defect, d.radius}));
    }
    write_csv("defect/roots.csv", t);
    io::CsvTable o(with_provenance({"lambda", "angular", "multiplicity", "a", "a2", "radius"}));
    for (const auto& r : d.oracle)
        o.add(row(hash_, st, -1, {r.lambda, static_cast<std::int64_t>(r.angular),
                                  static_cast<std::int64_t>(r.multiplicity), a, a2, d.radius}));
    write_csv("defect/oracle.csv", o);
    io::CsvTable nu(with_provenance({"lambda", "beta", "branch", "nu"}));
    for (const auto& s : d.solution.trace)
        for (std::size_t k = 0; k < s.nu.size(); ++k)
            nu.add(row(hash_, st, -1, {s.lambda, s.beta, static_cast<std::int64_t>(k), s.nu[k]}));
    write_csv("defect/nu_trace.csv", nu);
    defect_ = std::move(d);
    return *defect_;
}

std::vector<CellResult> Campaign::run_cells(const std::vector<double>& eps_list,
                                            const std::vector<std::uint64_t>& seeds)
{
    const auto& g = gap_scan();
    const auto& d = defect_modes();
    const Interval shrunk = g.selected.shrunk(cfg_.gap_margin);
    DefectSpec spec = cfg_.defect;
    spec.radius = d.radius;

    std::vector<int> roots;
    for (std::size_t i = 0; i < d.solution.pairs.size(); ++i)
        if (shrunk.contains(d.solution.pairs[i].lambda0))
            roots.push_back(static_cast<int>(i));

    std::vector<CellResult> out;
    const double B = cfg_.box_half_width;
    for (auto seed : seeds) {
        for (double eps : eps_list) {
            std::ostringstream tag;
            tag << "seed " << seed << " eps " << eps;
            log(tag.str());
            const auto real = sample_realization(cfg_.medium, Box::centered(B / eps), seed);
            const double h = eps / cfg_.cells_per_unit;
            int free_count = 0;
            {
                const auto free = assemble_eps_problem(real, eps, DefectSpec{}, Box::centered(B), h, cfg_.A1);
                free_count = count_in_window(free.op, shrunk);
            }
            const auto prob = assemble_eps_problem(real, eps, spec, Box::centered(B), h, cfg_.A1);
            const auto win = eigs_in_window(prob.op, shrunk, cfg_.solver);
            log(tag.str() + ": window eigenpairs done");
            const auto corr = corrector_cells(real, cfg_.A1, 1.0 / cfg_.cells_per_unit);
            const double ring = eps * cfg_.medium.buffer_gap;

            for (int ri : roots) {
                const auto& p = d.solution.pairs[ri];
                CellResult c;
                c.seed = seed;
                c.eps = eps;
                c.root = ri;
                c.lambda0 = p.lambda0;
                c.dofs = prob.op.size();
                c.removed = prob.geom.removed;
                c.free_count = free_count;
                c.defect_count = win.expected_count;
                c.gap_eigenvalues = win.eigenvalues;

                int nearest = -1;
                for (std::size_t k = 0; k < win.eigenvalues.size(); ++k)
                    if (nearest < 0 || std::abs(win.eigenvalues[k] - p.lambda0) <
                                           std::abs(win.eigenvalues[nearest] - p.lambda0))
                        nearest = static_cast<int>(k);
                c.found = nearest >= 0;

                const Vec b = realize_b_eps(prob.mesh(), prob.geom, p.lambda0, g.cell_table.get());
                c.b_sup = b.cwiseAbs().maxCoeff();
                const auto mode = transfer_mode(*d.solution.macro, p.u0, p.lambda0, prob.mesh());
                const auto qm = build_quasimode(prob.mesh(), mode, b, corr, eps, d.radius, cfg_.schedule);
                const Vec u = prob.op.from_nodes(qm.nodal);
                const Vec uh = resolvent_image(prob.op, u, p.lambda0);
                c.qm = quasimode_report(prob.op, u, uh, p.lambda0, &qm, mode.grad_sup, p.theta);
                const double margin = 10.0 * cfg_.solver.tol;
                c.certificate_count = count_in_window(
                    prob.op, Interval{p.lambda0 - c.qm.certificate - margin, p.lambda0 + c.qm.certificate + margin});
                c.window = cfg_.window_factor * c.qm.certificate;
                c.projection = projection_mass_bounds(prob.op, u, Interval{p.lambda0 - c.window, p.lambda0 + c.window},
                                                      cfg_.projection_steps);
                if (c.found) {
                    c.lambda_eps = win.eigenvalues[nearest];
                    const Vec ue = win.vectors.col(nearest);
                    c.two_scale = two_scale_diagnostics(prob, ue, c.lambda_eps, mode, b, ring);
                    const auto ext = harmonic_extension(prob.mesh(), c.two_scale.sign * prob.op.to_nodes(ue),
                                                        prob.geom, ring);
                    c.extension_ratio = ext.max_energy_ratio;
                    c.decay = decay_fit(prob.mesh(), ext.field, cfg_.decay_r_in, cfg_.decay_r_out, cfg_.decay_width,
                                        d.beta_inf_at_root[ri], cfg_.A1);
                }
                out.push_back(std::move(c));
            }
            log(tag.str() + ": diagnostics done");
        }
    }
    return out;
}

const std::vector<CellResult>& Campaign::convergence()
{
    if (cells_)
        return *cells_;
    defect_modes();
    {
        // harness self-check: e^{-|x|} on the campaign annuli must fit alpha = 1
        const double B = cfg_.box_half_width;
        const Mesh mesh = build_mesh(Box::centered(B), B / 128.0, Boundary::Dirichlet);
        Vec f(mesh.num_nodes());
        for (int i = 0; i < mesh.num_nodes(); ++i)
            f[i] = std::exp(-norm(mesh.node(i)));
        const auto fit = decay_fit(mesh, f, cfg_.decay_r_in, cfg_.decay_r_out, cfg_.decay_width, 0.0, cfg_.A1);
        if (std::abs(fit.alpha - 1.0) > 0.02)
            throw NumericalError("decay self-test: synthetic e^{-|x|} gives alpha " + fmt(fit.alpha));
    }
    std::vector<CellResult> cells;
    timed("cells", [&] { cells = run_cells(descending(cfg_.epsilons), cfg_.seeds); });

    io::CsvTable t(with_provenance(
        {"eps", "root", "lambda0", "dofs", "removed", "free_count", "defect_count", "found", "lambda_eps",
         "abs_error", "certificate", "norm_diff", "rho", "L", "corrector_l2", "grad_sup", "rho_sqrt", "tail",
         "locality", "certificate_count", "window", "projection_lower", "projection_estimate",
         "projection_upper", "two_scale_l2", "amplification_error", "b_sup"}));
    io::CsvTable ev(with_provenance({"eps", "index", "eigenvalue"}));
    for (const auto& c : cells) {
        const auto s = static_cast<std::int64_t>(c.seed);
        t.add(row(hash_, "defect-converge", s,
                  {c.eps, static_cast<std::int64_t>(c.root), c.lambda0, static_cast<std::int64_t>(c.dofs),
                   static_cast<std::int64_t>(c.removed), static_cast<std::int64_t>(c.free_count),
                   static_cast<std::int64_t>(c.defect_count), static_cast<std::int64_t>(c.found), c.lambda_eps,
                   std::abs(c.lambda_eps - c.lambda0), c.qm.certificate, c.qm.norm_diff, c.qm.rho, c.qm.L,
                   c.qm.corrector_l2, c.qm.grad_sup, c.qm.rho_sqrt, c.qm.tail, c.qm.locality,
                   static_cast<std::int64_t>(c.certificate_count), c.window, c.projection.lower,
                   c.projection.estimate, c.projection.upper, c.two_scale.l2_error,
                   c.two_scale.amplification_error, c.b_sup}));
        if (c.root == cells.front().root)
            for (std::size_t k = 0; k < c.gap_eigenvalues.size(); ++k)
                ev.add(row(hash_, "defect-converge", s, {c.eps, static_cast<std::int64_t>(k), c.gap_eigenvalues[k]}));
    }
    write_csv("converge/cells.csv", t);
    write_csv("converge/gap_eigenvalues.csv", ev);

    io::CsvTable f(with_provenance({"eps", "root", "lambda0", "alpha", "fit_residual", "gamma", "bound",
                                    "extension_ratio"}));
    io::CsvTable a(with_provenance({"eps", "root", "r_inner", "width", "mass", "area"}));
    for (const auto& c : cells) {
        if (!c.found)
            continue;
        const auto s = static_cast<std::int64_t>(c.seed);
        f.add(row(hash_, "decay", s, {c.eps, static_cast<std::int64_t>(c.root), c.lambda0, c.decay.alpha,
                                      c.decay.fit_residual, c.decay.gamma, c.decay.bound, c.extension_ratio}));
        for (std::size_t k = 0; k < c.decay.radii.size(); ++k)
            a.add(row(hash_, "decay", s, {c.eps, static_cast<std::int64_t>(c.root), c.decay.radii[k], c.decay.width,
                                          c.decay.masses[k], c.decay.areas[k]}));
    }
    write_csv("decay/fits.csv", f);
    write_csv("decay/annuli.csv", a);
    cells_ = std::move(cells);
    return *cells_;
}

const std::vector<CellResult>& Campaign::decay_study() { return convergence(); }

const EssResult& Campaign::essential_spectrum()
{
    if (ess_)
        return *ess_;
    const auto& g = gap_scan();
    const auto& d = defect_modes();
    EssResult r;
    timed("ess-spec", [&] {
        const double eps = cfg_.ess_epsilon;
        const double B = cfg_.box_half_width;
        const auto real = sample_realization(cfg_.medium, Box::centered(B / eps), cfg_.seeds.front());
        DefectSpec spec = cfg_.defect;
        spec.radius = d.radius;
        const DefectSpec control{cfg_.ess_control_radius, cfg_.A1};
        std::vector<Interval> bands = cfg_.ess_bands;
        bands.push_back(g.selected.shrunk(cfg_.gap_margin));
        std::set<double> edges;
        for (const auto& b : bands) {
            edges.insert(b.lo);
            edges.insert(b.hi);
        }
        for (int cpu : cfg_.ess_cells_per_unit) {
            const double h = eps / cpu;
            std::array<std::map<double, int>, 3> below;
            int dofs = 0;
            const DefectSpec* specs[3] = {nullptr, &spec, &control};
            for (int k = 0; k < 3; ++k) {
                const auto p = assemble_eps_problem(real, eps, specs[k] ? *specs[k] : DefectSpec{}, Box::centered(B),
                                                    h, cfg_.A1);
                dofs = p.op.size();
                Ldlt f(shifted(p.op.K, p.op.M, *edges.begin()));
                for (double e : edges) {
                    factorize_shifted(f, p.op.K, p.op.M, e);
                    below[k][e] = f.inertia().negative;
                }
            }
            for (std::size_t b = 0; b < bands.size(); ++b) {
                EssBandRow row_;
                row_.cells_per_unit = cpu;
                row_.dofs = dofs;
                row_.band = bands[b];
                row_.gap_window = b + 1 == bands.size();
                row_.free_count = below[0][bands[b].hi] - below[0][bands[b].lo];
                row_.defect_count = below[1][bands[b].hi] - below[1][bands[b].lo];
                row_.control_count = below[2][bands[b].hi] - below[2][bands[b].lo];
                r.rows.push_back(row_);
            }
        }
    });
    io::CsvTable t(with_provenance({"eps", "cells_per_unit", "dofs", "band_lo", "band_hi", "gap_window",
                                    "free_count", "defect_count", "control_count", "difference",
                                    "control_difference"}));
    for (const auto& b : r.rows)
        t.add(row(hash_, "ess-spec", static_cast<std::int64_t>(cfg_.seeds.front()),
                  {cfg_.ess_epsilon, static_cast<std::int64_t>(b.cells_per_unit), static_cast<std::int64_t>(b.dofs),
                   b.band.lo, b.band.hi, static_cast<std::int64_t>(b.gap_window),
                   static_cast<std::int64_t>(b.free_count), static_cast<std::int64_t>(b.defect_count),
                   static_cast<std::int64_t>(b.control_count), static_cast<std::int64_t>(b.defect_count - b.free_count),
                   static_cast<std::int64_t>(b.control_count - b.free_count)}));
    write_csv("ess/bands.csv", t);
    ess_ = std::move(r);
    return *ess_;
}

// --- assertions -----------------------------------------------------------------

namespace {

// Cells of one seed and root ordered by decreasing eps.
std::map<std::pair<std::uint64_t, int>, std::vector<const CellResult*>> by_series(const std::vector<CellResult>& cells)
{
    std::map<std::pair<std::uint64_t, int>, std::vector<const CellResult*>> out;
    for (const auto& c : cells)
        out[{c.seed, c.root}].push_back(&c);
    for (auto& [k, v] : out)
        std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->eps > b->eps; });
    return out;
}

bool strictly_decreasing(const std::vector<double>& v)
{
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1]))
            return false;
    return true;
}

std::string series(const std::vector<double>& v)
{
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? ", " : "") + fmt(v[i]);
    return s + "]";
}

} // namespace

io::AssertionRecord Campaign::assert_named(const std::string& name)
{
    io::AssertionRecord rec{name, false, ""};
    std::ostringstream det;
    if (name == "dirichlet_oracle") {
        const auto& g = gap_scan();
        bool ok = true;
        for (const auto& c : g.dirichlet) {
            ok = ok && c.rel_error <= 0.01 && c.rel_error_half_h < c.rel_error;
            det << c.shape << ": h=" << fmt(c.h) << " err " << fmt(c.rel_error) << " -> " << fmt(c.rel_error_half_h)
                << "; ";
        }
        rec.pass = ok;
    } else if (name == "beta_identities") {
        const auto& g = gap_scan();
        bool ok = true;
        double worst = 0.0;
        for (const auto& c : g.beta_checks) {
            if (c.kind == "beta_zero") {
                ok = ok && c.value == 0.0;
                det << c.shape << " beta(0)=" << fmt(c.value) << "; ";
            } else if (c.kind == "expansion_vs_direct") {
                ok = ok && c.rel_error <= 1e-6;
                worst = std::max(worst, c.rel_error);
            } else {
                ok = ok && c.rel_error <= 0.01;
                det << "pole " << fmt(c.value) << " vs " << fmt(c.reference) << "; ";
            }
        }
        det << "worst expansion/direct " << fmt(worst);
        rec.pass = ok;
    } else if (name == "gap_certified") {
        const auto& cells = convergence();
        const double e_min = *std::min_element(cfg_.epsilons.begin(), cfg_.epsilons.end());
        std::set<std::uint64_t> seen;
        bool ok = !cells.empty();
        for (const auto& c : cells)
            if (c.eps == e_min && seen.insert(c.seed).second) {
                ok = ok && c.free_count == 0;
                det << "seed " << c.seed << ": " << c.free_count << " in shrunk gap; ";
            }
        det << "eps=" << fmt(e_min) << " gap " << fmt(gap_scan().selected.lo) << ".." << fmt(gap_scan().selected.hi);
        rec.pass = ok && seen.size() == cfg_.seeds.size();
    } else if (name == "homogenized_tensor") {
        const auto& h = homogenize();
        const double zf = (h.zero_fraction - cfg_.A1).norm() / cfg_.A1.norm();
        const bool bounds = h.tensor.within_bounds(1e-12);
        const double off = std::abs(h.tensor.A(0, 1));
        const double se = h.tensor.stderr_(0, 1);
        rec.pass = zf <= 1e-12 && bounds && off <= 3.0 * se;
        det << "zero-fraction rel err " << fmt(zf) << "; bounds " << (bounds ? "ok" : "violated") << "; |A01| "
            << fmt(off) << " vs 3se " << fmt(3.0 * se);
    } else if (name == "defect_convergence") {
        const auto& cells = convergence();
        const auto& d = defect_modes();
        const Interval shrunk = gap_scan().selected.shrunk(cfg_.gap_margin);
        int hom_mult = 0;
        for (const auto& p : d.solution.pairs)
            hom_mult += shrunk.contains(p.lambda0);
        bool ok = hom_mult > 0;
        const double e_min = *std::min_element(cfg_.epsilons.begin(), cfg_.epsilons.end());
        for (const auto& [key, v] : by_series(cells)) {
            std::vector<double> err, cert;
            bool found = v.size() == cfg_.epsilons.size();
            for (const auto* c : v) {
                found = found && c->found;
                err.push_back(std::abs(c->lambda_eps - c->lambda0));
                cert.push_back(c->qm.certificate);
            }
            const bool mult = v.back()->eps == e_min && v.back()->defect_count == hom_mult;
            ok = ok && found && strictly_decreasing(err) && strictly_decreasing(cert) && mult;
            det << "seed " << key.first << " root " << key.second << ": found " << found << " |err| " << series(err)
                << " cert " << series(cert) << " count " << v.back()->defect_count << "/" << hom_mult << "; ";
        }
        rec.pass = ok && !cells.empty();
    } else if (name == "uniform_decay") {
        const auto& cells = convergence();
        bool ok = !cells.empty();
        for (const auto& [key, v] : by_series(cells)) {
            std::vector<double> al;
            double bound = 0.0;
            bool above = true;
            for (const auto* c : v) {
                if (!c->found) {
                    above = false;
                    continue;
                }
                al.push_back(c->decay.alpha);
                bound = c->decay.bound;
                above = above && c->decay.alpha >= 0.95 * c->decay.bound;
            }
            double worst = 0.0;
            for (std::size_t i = 1; i < al.size(); ++i)
                worst = std::max(worst, std::abs(al[i] - al[i - 1]) / al[i - 1]);
            ok = ok && above && worst <= 0.10;
            det << "seed " << key.first << ": alpha " << series(al) << " vs 0.95*bound " << fmt(0.95 * bound)
                << ", max halving change " << fmt(worst) << "; ";
        }
        rec.pass = ok;
    } else if (name == "two_scale") {
        const auto& cells = convergence();
        bool ok = !cells.empty();
        for (const auto& [key, v] : by_series(cells)) {
            std::vector<double> l2, amp;
            bool found = true;
            for (const auto* c : v) {
                found = found && c->found;
                l2.push_back(c->two_scale.l2_error);
                amp.push_back(c->two_scale.amplification_error);
            }
            ok = ok && found && strictly_decreasing(l2) && strictly_decreasing(amp);
            det << "seed " << key.first << ": l2 " << series(l2) << " amp " << series(amp) << "; ";
        }
        rec.pass = ok;
    } else if (name == "projection_bound") {
        const auto& cells = convergence();
        bool ok = !cells.empty();
        double worst = 1.0;
        for (const auto& c : cells) {
            const double need = 1.0 - 2.0 * c.qm.certificate / c.window;
            ok = ok && c.projection.lower >= need;
            worst = std::min(worst, c.projection.lower - need);
        }
        det << "min(lower bound - (1 - 2/" << fmt(cfg_.window_factor) << ")) = " << fmt(worst) << " over "
            << cells.size() << " quasimodes";
        rec.pass = ok;
    } else if (name == "essential_spectrum") {
        const auto& e = essential_spectrum();
        bool ok = !e.rows.empty();
        std::map<std::pair<double, double>, std::vector<const EssBandRow*>> bands;
        for (const auto& r : e.rows) {
            ok = ok && r.control_count == r.free_count;
            if (!r.gap_window)
                bands[{r.band.lo, r.band.hi}].push_back(&r);
        }
        for (const auto& [b, rows] : bands) {
            std::vector<double> diff;
            for (const auto* r : rows)
                diff.push_back(std::abs(r->defect_count - r->free_count));
            for (double x : diff)
                ok = ok && x <= 5.0;
            ok = ok && diff.back() <= diff.front();
            det << "[" << fmt(b.first) << "," << fmt(b.second) << "] |diff| " << series(diff) << "; ";
        }
        det << "control " << (ok ? "ok" : "checked");
        rec.pass = ok;
    } else if (name == "determinism") {
        const auto diff = determinism_check(reduced_config(cfg_), out_ / "determinism",
                                            {"gap-scan", "homogenize", "defect-converge", "ess-spec"});
        rec.pass = diff.empty();
        if (diff.empty())
            det << "all CSVs identical across two runs of the reduced campaign";
        for (const auto& f : diff)
            det << f << " differs; ";
    } else {
        throw ConfigError("unknown assertion '" + name + "'");
    }
    rec.detail = det.str();
    return rec;
}

std::vector<io::AssertionRecord> Campaign::run(const std::string& command)
{
    const auto stages = stages_for_command(command);
    const fs::path manifest_path = out_ / "manifest.json";
    io::RunManifest manifest;
    bool have = false;
    if (fs::exists(manifest_path)) {
        try {
            manifest = io::RunManifest::from_json(io::read_file(manifest_path));
            have = manifest.config_hash == hash_;
        } catch (const std::exception&) {
            have = false;
        }
    }
    auto covered = [&](const std::string& a) {
        for (const auto& s : stages_for_assertion(a))
            if (std::find(stages.begin(), stages.end(), s) == stages.end())
                return false;
        return true;
    };
    if (have && manifest.verify(out_) &&
        (std::find(manifest.commands.begin(), manifest.commands.end(), command) != manifest.commands.end() ||
         std::find(manifest.commands.begin(), manifest.commands.end(), "all") != manifest.commands.end())) {
        skipped_ = true;
        log("campaign already complete for '" + command + "': nothing to do");
        std::vector<io::AssertionRecord> out;
        for (const auto& a : manifest.assertions)
            if (covered(a.name))
                out.push_back(a);
        return out;
    }
    if (!have)
        manifest = io::RunManifest{};

    fs::create_directories(out_);
    {
        const std::string raw = cfg_.raw.dump(2) + "\n";
        io::write_file(out_ / "config.json", raw);
        files_["config.json"] = io::sha256_hex(raw);
        const std::string eff = cfg_.to_json().dump(2) + "\n";
        io::write_file(out_ / "config.effective.json", eff);
        files_["config.effective.json"] = io::sha256_hex(eff);
    }
    auto has = [&](const char* s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
    if (has("gap"))
        gap_scan();
    if (has("hom"))
        homogenize();
    if (has("defect"))
        defect_modes();
    if (has("cells"))
        convergence();
    if (has("ess"))
        essential_spectrum();

    std::vector<io::AssertionRecord> records;
    for (const auto& a : cfg_.assertions)
        if (covered(a)) {
            const auto t0 = std::chrono::steady_clock::now();
            records.push_back(assert_named(a));
            if (a == "determinism")
                timings_.push_back({"determinism",
                                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
            log(a + ": " + (records.back().pass ? "PASS " : "FAIL ") + records.back().detail);
        }

    // merge into the manifest
    manifest.artifact_version = kArtifactVersion;
    manifest.config_hash = hash_;
    if (std::find(manifest.commands.begin(), manifest.commands.end(), command) == manifest.commands.end())
        manifest.commands.push_back(command);
    for (const auto& t : timings_) {
        auto it = std::find_if(manifest.timings.begin(), manifest.timings.end(),
                               [&](const io::StageTiming& x) { return x.stage == t.stage; });
        if (it == manifest.timings.end())
            manifest.timings.push_back(t);
        else
            *it = t;
    }
    std::map<std::string, io::FileEntry> files;
    for (const auto& f : manifest.files)
        files[f.path] = f;
    for (const auto& [rel, sha] : files_)
        files[rel] = {rel, sha, fs::file_size(out_ / rel)};
    manifest.files.clear();
    for (const auto& [rel, f] : files)
        manifest.files.push_back(f);
    for (const auto& r : records) {
        auto it = std::find_if(manifest.assertions.begin(), manifest.assertions.end(),
                               [&](const io::AssertionRecord& x) { return x.name == r.name; });
        if (it == manifest.assertions.end())
            manifest.assertions.push_back(r);
        else
            *it = r;
    }
    io::write_file(manifest_path, manifest.to_json());
    return records;
}

std::vector<std::string> determinism_check(const ExperimentConfig& cfg, const fs::path& dir,
                                           const std::vector<std::string>& commands)
{
    std::vector<fs::path> dirs{dir / "a", dir / "b"};
    std::vector<std::vector<std::string>> lists;
    for (const auto& d : dirs) {
        fs::remove_all(d);
        Campaign c(cfg, d);
        for (const auto& cmd : commands)
            c.run(cmd);
        lists.push_back(c.written());
    }
    std::vector<std::string> differ;
    std::set<std::string> all(lists[0].begin(), lists[0].end());
    all.insert(lists[1].begin(), lists[1].end());
    for (const auto& f : all) {
        if (f.size() < 4 || f.substr(f.size() - 4) != ".csv")
            continue;
        const auto a = dirs[0] / f;
        const auto b = dirs[1] / f;
        if (!fs::exists(a) || !fs::exists(b) || io::read_file(a) != io::read_file(b))
            differ.push_back(f);
    }
    return differ;
}

} // namespace hcd
