#pragma once

#include <random>
#include <string>

#include "nmsynth/config.hpp"
#include "nmsynth/data.hpp"
#include "nmsynth/kernel.hpp"
#include "nmsynth/space.hpp"

namespace nmsynth::testing {

inline std::string data_path(const std::string& rel) { return std::string(NMSYNTH_TEST_DATA) + "/" + rel; }

inline EvidenceNetwork load_rrms_shape() {
  return load_network(data_path("rrms_shape/ipd.csv"), data_path("rrms_shape/ad.csv"),
                      data_path("rrms_shape/studies.csv"), data_path("rrms_shape/treatments.csv"),
                      data_path("rrms_shape/directions.csv"));
}

// Two treatments, one or more two-arm AD studies.
inline EvidenceNetwork two_arm_ad_network(const std::vector<std::array<long, 4>>& arms_rn) {
  EvidenceNetwork net;
  net.treatments = {{1, "control", false}, {2, "active", true}};
  net.reference_treatment = 1;
  for (std::size_t j = 0; j < arms_rn.size(); ++j) {
    Study s;
    s.id = "s" + std::to_string(j + 1);
    s.design = Design::rct;
    s.format = DataFormat::ad;
    s.rob = RobLevel::low;
    s.reference_arm = 1;
    s.arms = {1, 2};
    s.ad.push_back({1, arms_rn[j][0], arms_rn[j][1], {}});
    s.ad.push_back({2, arms_rn[j][2], arms_rn[j][3], {}});
    net.studies.push_back(std::move(s));
  }
  return net;
}

// Draws a random valid state: locations N(0,1), interval parameters uniform
// inside their support, binaries fair coin flips.
inline ParameterState random_state(const ParameterSpace& space, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  ParameterState st;
  st.values.resize(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    switch (space.params[i].support) {
      case Support::real: st.values[i] = normal(rng); break;
      case Support::positive_interval: st.values[i] = unif(rng) * space.params[i].upper; break;
      case Support::unit_interval: st.values[i] = unif(rng); break;
      case Support::binary: st.values[i] = rng() % 2 ? 1.0 : 0.0; break;
    }
  }
  return st;
}

}  // namespace nmsynth::testing
