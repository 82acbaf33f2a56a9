// Acceptance suite: runs the full campaign of a config and prints one line per
// criterion. Exit status 0 only when all ten pass.
//
//   hcd_acceptance <config.json> <output dir>

#include "hcd/experiments.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    if (argc != 3) {
        std::cerr << "usage: hcd_acceptance <config.json> <output dir>\n";
        return 2;
    }
    const std::vector<std::pair<int, std::string>> criteria{
        {1, "dirichlet_oracle"},   {2, "beta_identities"}, {3, "gap_certified"},    {4, "homogenized_tensor"},
        {5, "defect_convergence"}, {6, "uniform_decay"},   {7, "two_scale"},        {8, "projection_bound"},
        {9, "essential_spectrum"}, {10, "determinism"}};
    try {
        auto cfg = hcd::ExperimentConfig::load(argv[1]);
        cfg.assertions.clear();
        for (const auto& [k, name] : criteria)
            cfg.assertions.push_back(name);
        hcd::Campaign campaign(cfg, argv[2], true);
        const auto records = campaign.run("all");
        int failed = 0;
        for (const auto& [k, name] : criteria) {
            const hcd::io::AssertionRecord* rec = nullptr;
            for (const auto& r : records)
                if (r.name == name)
                    rec = &r;
            const bool pass = rec && rec->pass;
            failed += !pass;
            std::cout << "criterion " << k << " " << name << ": " << (pass ? "PASS" : "FAIL") << " | "
                      << (rec ? rec->detail : "not evaluated") << "\n";
        }
        std::cout << (10 - failed) << "/10 criteria pass\n";
        return failed == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "acceptance campaign aborted: " << e.what() << "\n";
        return 3;
    }
}
