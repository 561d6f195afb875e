#pragma once

// Seeded random streams. Every Monte Carlo unit derives its own engine from
// (master seed, unit index, tag) so results do not depend on scheduling.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace univc::rng {

using Engine = std::mt19937_64;

/// splitmix64 finalizer.
std::uint64_t mix(std::uint64_t x);
std::uint64_t derive(std::uint64_t master, std::uint64_t unit, std::uint64_t tag = 0);
Engine stream(std::uint64_t master, std::uint64_t unit = 0, std::uint64_t tag = 0);

Eigen::VectorXd std_normal(Engine& eng, Eigen::Index n);
Eigen::MatrixXd std_normal(Engine& eng, Eigen::Index rows, Eigen::Index cols);
/// Uniform on (0, 1].
double uniform_open0(Engine& eng);
/// Random permutation of {0, ..., n-1}.
std::vector<Eigen::Index> permutation(Engine& eng, Eigen::Index n);

}  // namespace univc::rng
