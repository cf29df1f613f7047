#pragma once

#include "spectral_core/experiment.hpp"

inline spectral_core::StudentSpec student_spec(std::size_t h, spectral_core::Parametrization p, std::uint64_t seed) {
  spectral_core::StudentSpec s;
  s.h = h;
  s.parametrization = p;
  s.seed = seed;
  return s;
}
