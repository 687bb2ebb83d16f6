#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twincert/lincore.hpp"
#include "twincert/model.hpp"

namespace twincert {

struct AttackConfig {
  int steps = 50;
  double step_size = 0.0;  // <= 0 resolves to delta / 8
  int restarts = 3;
  std::uint64_t rng_seed = 0;
};

using Dataset = std::vector<std::vector<double>>;

// CSV, one input vector per row; a non-numeric first line is treated as a
// header. Rows must agree in length.
Dataset load_dataset(const std::string& path);

// Exact output-variation bound: both copies big-M encoded over interval
// pre-bounds, coupled at the input, searched to optimality in both senses.
// Refuses networks with more than 24 unstable ReLUs unless force is set.
double exact_epsilon(const Network& net, const Box& domain, double delta,
                     int output, bool force = false);

// Brute-force lower bound: base points on a uniform grid of pitch `step`
// over the domain, perturbed points on the same pitch over the delta-ball
// clipped to the domain. Inputs of dimension <= 3 only.
double grid_oracle(const Network& net, const Box& domain, double delta,
                   int output, double step);

// Sign-gradient ascent/descent from every dataset row with random restarts;
// returns the largest |F_j(x+eta) - F_j(x)| seen. Deterministic per seed.
double pgd_epsilon(const Network& net, const Dataset& data, const Box& domain,
                   double delta, int output, const AttackConfig& ac);

// One sign-gradient step of size delta from x, clipped to the domain.
std::vector<double> fgsm_perturb(const Network& net, const std::vector<double>& x,
                                 const Box& domain, double delta, int output,
                                 Sense sense);

}  // namespace twincert
