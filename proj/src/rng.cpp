#include "univc/rng.hpp"

#include <algorithm>
#include <numeric>

namespace univc::rng {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t master, std::uint64_t unit, std::uint64_t tag) {
  return mix(mix(mix(master) ^ unit) ^ (tag * 0xd1b54a32d192ed03ULL));
}

Engine stream(std::uint64_t master, std::uint64_t unit, std::uint64_t tag) {
  const std::uint64_t s = derive(master, unit, tag);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(unit), static_cast<std::uint32_t>(tag)};
  return Engine(seq);
}

Eigen::VectorXd std_normal(Engine& eng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = nd(eng);
  return z;
}

Eigen::MatrixXd std_normal(Engine& eng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = nd(eng);
  return z;
}

double uniform_open0(Engine& eng) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  return 1.0 - ud(eng);
}

std::vector<Eigen::Index> permutation(Engine& eng, Eigen::Index n) {
  std::vector<Eigen::Index> p(n);
  std::iota(p.begin(), p.end(), Eigen::Index{0});
  std::shuffle(p.begin(), p.end(), eng);
  return p;
}

}  // namespace univc::rng
