#pragma once

#include "dislocore/lattice.hpp"

namespace fixtures {

inline dislo::ProjectedMultilattice silicon_edge()
{
    auto spec = dislo::silicon_spec();
    auto fr = dislo::build_frame(spec, dislo::Vec3(-0.5, 0.5, 0.0), dislo::Vec3(1, 1, 2));
    auto ml = dislo::project(spec, fr);
    dislo::place_core(ml, dislo::Vec2(0.25, 0.25));
    return ml;
}

inline dislo::ProjectedMultilattice toy_edge()
{
    auto spec = dislo::toy_spec();
    auto fr = dislo::build_frame(spec, dislo::Vec3(1, 0, 0), dislo::Vec3(0, 0, 1));
    auto ml = dislo::project(spec, fr);
    dislo::place_core(ml, dislo::Vec2(0.25, 0.25));
    return ml;
}

constexpr double kSiliconRange = 1.5;
constexpr double kToyRange = 1.01;

} // namespace fixtures
