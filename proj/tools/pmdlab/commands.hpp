#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "config.hpp"
#include "pmdlab/dist.hpp"

namespace pmdlab::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericError = 3 };

/// Git blob id (SHA-1 of "blob <len>\0" + content), lowercase hex.
std::string git_blob_sha1(const std::string& content);

/// Canonical text form of an instance: one `id,weight,r_0 r_1 ...` line per state.
std::string canonical_text(const BanditInstance& instance);

// Each command writes its files (plus manifests) under common.out and returns their paths.
std::vector<std::filesystem::path> cmd_exact(const ExactParams& p, const CommonOptions& common);
std::vector<std::filesystem::path> cmd_figures(const FiguresParams& p, const CommonOptions& common);
std::vector<std::filesystem::path> cmd_estimate(const SweepConfig& c, const CommonOptions& common);
std::vector<std::filesystem::path> cmd_train(const TrainParams& p, const CommonOptions& common);

/// Full command line entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace pmdlab::cli
