#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dovis/experiments.hpp"
#include "dovis/guarantees.hpp"
#include "dovis/kernel.hpp"
#include "dovis/rank.hpp"
#include "dovis/sim.hpp"

namespace dovis::config {

/// Everything a run can be configured with. Sections absent from the
/// document keep their library defaults.
struct RunConfig {
    sim::WorldConfig world;
    rank::RankHyperparams hp;
    kernel::UtilityWeights weights;
    exp::ExperimentConfig experiment; // world, hp and weights mirror the fields above
    guarantees::SuiteConfig verify;
    int grace_epochs = oat::TelemetryStore::kDefaultGraceEpochs;
};

/// Parses a YAML document. Unknown keys, wrongly typed values and
/// out-of-range settings raise ConfigError carrying the 1-based line.
RunConfig parse_config(std::string_view text);

/// Reads and parses a file; an unreadable file is a ConfigError without a line.
RunConfig load_config(const std::filesystem::path &path);

} // namespace dovis::config
