#pragma once

// Configuration handling shared by the univc executable and its tests.

#include "univc/errors.hpp"
#include "univc/estimation.hpp"
#include "univc/model.hpp"
#include "univc/slrt.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace univc::cli {

using json = nlohmann::json;

inline constexpr std::uint64_t kDefaultSeedSplit = 1;
inline constexpr std::uint64_t kDefaultSeedU = 2;
inline constexpr std::uint64_t kDefaultSeed = 12345;

std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t x);

/// Parses "h1=0,h2=0.3" (proportions), "s2=0" (variances) or "sd2=1.5"
/// (standard deviations, pinned as their squares). Components are 1-based.
NullSpec parse_null(const std::string& text, Index M);
/// "lo:hi:steps".
CiGrid parse_grid(const std::string& text);

/// A JSON object read from `path`; relative file names inside it resolve
/// against `base_dir`.
struct Config {
  json data = json::object();
  std::string base_dir = ".";

  std::string path(const std::string& key) const;
  std::string resolve(const std::string& file) const;
};
Config load_config(const std::string& path);

struct Problem {
  ResponseVector y;
  KernelSet K;
  std::optional<CrossedDesign> design;
};
/// Response and kernels from `response` + `kernels` (+ `basis`), from
/// `response` + `design`, or from a long-format crossed table under `data`.
Problem load_problem(const Config& c);
/// The kernel set alone (no response needed).
KernelSet load_kernels(const Config& c, Index n_hint);

FitOptions fit_options(const json& cfg);
SlrtOptions slrt_options(const json& cfg);

/// 0 success, 1 usage or parse, 2 numerical failure.
int exit_code(ErrorKind kind);

}  // namespace univc::cli
