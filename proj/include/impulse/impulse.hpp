#pragma once

#include <impulse/config.hpp>
#include <impulse/envelope.hpp>
#include <impulse/expr.hpp>
#include <impulse/fundamentals.hpp>
#include <impulse/hermite.hpp>
#include <impulse/numerics.hpp>
#include <impulse/oracle.hpp>
#include <impulse/parallel.hpp>
#include <impulse/policy.hpp>
#include <impulse/problem.hpp>
#include <impulse/sde.hpp>
#include <impulse/simulate.hpp>
#include <impulse/solver.hpp>
#include <impulse/transform.hpp>

namespace impulse {

inline constexpr const char* version = "1.0.0";

} // namespace impulse
