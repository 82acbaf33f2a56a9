#pragma once

// End-to-end campaigns: configuration, stage orchestration, CSV output and the
// acceptance assertions evaluated on the results.

#include "hcd/eigensolver.hpp"
#include "hcd/geometry.hpp"
#include "hcd/homogenization.hpp"
#include "hcd/io.hpp"
#include "hcd/quasimode.hpp"
#include "hcd/spectral.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hcd {

struct ExperimentConfig {
    std::string name = "campaign";
    RandomMediumSpec medium;
    DefectSpec defect;
    bool tune_defect_radius = false;  // pick the radius from the radial oracle
    Mat2 A1 = Mat2::Identity();
    std::vector<double> epsilons;
    std::vector<std::uint64_t> seeds;
    double box_half_width = 2.0;
    int cells_per_unit = 16;  // eps-mesh h = eps / cells_per_unit
    double macro_h = 1.0 / 64.0;

    int modes = 12;                  // cell-consistent table
    double mode_min_across = 8.0;
    int fine_modes = 40;             // reference-accuracy table
    int fine_cells_per_unit = 256;
    int mc_samples = 64;
    std::uint64_t mc_seed = 1;

    Interval lambda_range{0.0, 150.0};
    double lambda_step = 0.05;
    double gap_margin = 0.05;

    double beta_inf_region = 64.0;
    std::vector<double> beta_inf_windows{8.0, 16.0, 32.0};
    std::uint64_t beta_inf_seed = 11;

    int hom_cells = 8;
    int hom_samples = 32;
    std::uint64_t hom_seed = 7;

    CutoffSchedule schedule;
    double window_factor = 4.0;
    int projection_steps = 80;

    double decay_r_in = 0.75;
    double decay_r_out = 1.75;
    double decay_width = 0.25;

    double ess_epsilon = 0.125;
    std::vector<int> ess_cells_per_unit{16, 32};
    std::vector<Interval> ess_bands{{10.0, 30.0}, {30.0, 50.0}};
    double ess_control_radius = 1e-3;

    EigenOptions solver;
    DefectOptions defect_options;
    std::vector<std::string> assertions;

    nlohmann::json raw;  // as read, before overrides

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;
    /// Throws ConfigError / ConstraintViolation before any compute.
    void validate() const;
    /// SHA-256 of the canonical JSON of the effective configuration.
    std::string hash() const;
};

/// Names accepted in ExperimentConfig::assertions.
const std::vector<std::string>& known_assertions();

struct DirichletCheck {
    std::string shape;
    double h = 0.0;
    double lambda1 = 0.0;
    double lambda1_half_h = 0.0;
    double exact = 0.0;
    double rel_error = 0.0;
    double rel_error_half_h = 0.0;
};

struct BetaCheck {
    std::string kind;
    std::string shape;
    double lambda = 0.0;
    double value = 0.0;
    double reference = 0.0;
    double rel_error = 0.0;
};

struct GapScanResult {
    std::shared_ptr<const DirichletModeTable> cell_table;
    std::shared_ptr<const DirichletModeTable> fine_table;
    BetaEnsemble ensemble;       // cell-consistent
    BetaEnsemble fine_ensemble;
    GapSet beta_gaps;
    GapSet G_gaps;
    GapSet fine_gaps;
    Interval selected;  // first G-gap
    std::vector<DirichletCheck> dirichlet;
    std::vector<BetaCheck> beta_checks;
    std::shared_ptr<BetaInfinityEstimator> beta_inf;
};

struct HomogenizeResult {
    HomogenizedTensor tensor;
    Mat2 zero_fraction;  // A1hom of an inclusion-free cell
};

struct DefectResult {
    DefectSolution solution;
    std::vector<RadialRoot> oracle;
    double radius = 0.0;
    std::vector<double> beta_inf_at_root;
};

/// Per (seed, eps, homogenised root) outcome of the eps-problem.
struct CellResult {
    std::uint64_t seed = 0;
    double eps = 0.0;
    int root = 0;
    double lambda0 = 0.0;
    int dofs = 0;
    int removed = 0;
    int free_count = -1;     // defect-free eigenvalues in the shrunk gap
    int defect_count = -1;   // defected eigenvalues in the shrunk gap
    std::vector<double> gap_eigenvalues;
    double lambda_eps = 0.0;  // nearest to lambda0
    bool found = false;
    QuasimodeReport qm;
    int certificate_count = 0;  // eigenvalues within certificate + margin
    ProjectionBounds projection;
    double window = 0.0;
    TwoScaleReport two_scale;
    DecayFit decay;
    double extension_ratio = 0.0;
    double b_sup = 0.0;
};

struct EssBandRow {
    int cells_per_unit = 0;
    int dofs = 0;
    Interval band;
    int free_count = 0;
    int defect_count = 0;
    int control_count = 0;
    bool gap_window = false;
};

struct EssResult {
    std::vector<EssBandRow> rows;
};

class Campaign {
public:
    Campaign(ExperimentConfig cfg, std::filesystem::path out_dir, bool verbose = false);

    const ExperimentConfig& config() const { return cfg_; }
    const std::filesystem::path& output_dir() const { return out_; }

    const GapScanResult& gap_scan();
    const HomogenizeResult& homogenize();
    const DefectResult& defect_modes();
    const std::vector<CellResult>& convergence();
    const std::vector<CellResult>& decay_study();
    const EssResult& essential_spectrum();

    /// Runs the stages of `command` (gap-scan, homogenize, defect-converge, decay,
    /// ess-spec, all), writes their CSVs and the manifest, and evaluates the configured
    /// assertions those stages support. Re-running a completed campaign is a no-op.
    std::vector<io::AssertionRecord> run(const std::string& command);

    /// Evaluates one named assertion, running the stages it needs.
    io::AssertionRecord assert_named(const std::string& name);

    /// Files written so far, relative to the output directory.
    std::vector<std::string> written() const;
    bool skipped() const { return skipped_; }

private:
    void log(const std::string& msg) const;
    void write_csv(const std::string& rel, const io::CsvTable& t);
    void timed(const std::string& stage, const std::function<void()>& f);
    std::vector<CellResult> run_cells(const std::vector<double>& eps, const std::vector<std::uint64_t>& seeds);

    ExperimentConfig cfg_;
    std::filesystem::path out_;
    bool verbose_ = false;
    bool skipped_ = false;
    std::string hash_;
    std::optional<GapScanResult> gap_;
    std::optional<HomogenizeResult> hom_;
    std::optional<DefectResult> defect_;
    std::optional<std::vector<CellResult>> cells_;
    std::optional<EssResult> ess_;
    std::map<std::string, std::string> files_;  // rel path -> sha256
    std::vector<io::StageTiming> timings_;
    std::vector<std::string> stages_done_;
};

/// Stages each assertion depends on.
std::vector<std::string> stages_for_assertion(const std::string& name);
std::vector<std::string> stages_for_command(const std::string& command);

/// Reduced copy used by the determinism check: first two eps values, first seed.
ExperimentConfig reduced_config(const ExperimentConfig& cfg);

/// Runs `commands` twice on `cfg` into dir/a and dir/b and compares every CSV byte for
/// byte. Returns the list of differing files (empty on success).
std::vector<std::string> determinism_check(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                           const std::vector<std::string>& commands);

} // namespace hcd
