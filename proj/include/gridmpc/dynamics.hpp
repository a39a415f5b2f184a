#ifndef GRIDMPC_DYNAMICS_HPP
#define GRIDMPC_DYNAMICS_HPP

#include "gridmpc/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gridmpc {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;

// Unicycle state: planar position, heading and forward speed.  The heading is
// kept unwrapped so consecutive states stay continuous.
struct StateVector {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
    double v = 0.0;

    Vec2 position() const { return Vec2(x, y); }
    Vec4 vec() const { return Vec4(x, y, theta, v); }
    static StateVector from_vec(const Vec4 &s) { return StateVector{s(0), s(1), s(2), s(3)}; }
};

// Turn rate and forward acceleration.
struct ControlInput {
    double turn_rate = 0.0;
    double accel = 0.0;

    Vec2 vec() const { return Vec2(turn_rate, accel); }
    static ControlInput from_vec(const Vec2 &u) { return ControlInput{u(0), u(1)}; }
};

// Explicit-Euler discretization of the unicycle.
inline StateVector step(const StateVector &s, const ControlInput &u, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("dynamics: dt must be positive");
    StateVector n;
    n.x = s.x + s.v * std::cos(s.theta) * dt;
    n.y = s.y + s.v * std::sin(s.theta) * dt;
    n.theta = s.theta + u.turn_rate * dt;
    n.v = s.v + u.accel * dt;
    return n;
}

// First-order expansion of step() about a nominal state and input:
// x+ = A (x - xbar) + B (u - ubar) + step(xbar, ubar).
struct LinearizedDynamics {
    Mat4 A = Mat4::Identity();
    Mat42 B = Mat42::Zero();
    StateVector nominal_state;
    ControlInput nominal_input;

    // Constant part c so that x+ = A x + B u + c.
    Vec4 affine_term(double dt) const {
        return step(nominal_state, nominal_input, dt).vec() - A * nominal_state.vec() -
               B * nominal_input.vec();
    }
};

inline LinearizedDynamics linearize(const StateVector &s, const ControlInput &u, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("dynamics: dt must be positive");
    LinearizedDynamics lin;
    lin.nominal_state = s;
    lin.nominal_input = u;
    const double c = std::cos(s.theta), sn = std::sin(s.theta);
    lin.A = Mat4::Identity();
    lin.A(0, 2) = -s.v * sn * dt;
    lin.A(0, 3) = c * dt;
    lin.A(1, 2) = s.v * c * dt;
    lin.A(1, 3) = sn * dt;
    lin.B(2, 0) = dt;
    lin.B(3, 1) = dt;
    return lin;
}

// States produced by applying the input sequence from s0; result holds
// inputs.size() + 1 states starting with s0 itself.
inline std::vector<StateVector> rollout(const StateVector &s0,
                                        const std::vector<ControlInput> &inputs, double dt) {
    std::vector<StateVector> states;
    states.reserve(inputs.size() + 1);
    states.push_back(s0);
    for (const ControlInput &u : inputs) states.push_back(step(states.back(), u, dt));
    return states;
}

// Box bounds on states and inputs.
struct OperatingLimits {
    Vec4 state_lower{-50.0, -50.0, -10.0, -30.0};
    Vec4 state_upper{50.0, 50.0, 10.0, 30.0};
    Vec2 input_lower{-15.0, -5.0};
    Vec2 input_upper{15.0, 5.0};

    bool state_in_bounds(const StateVector &s, double tol = 0.0) const {
        const Vec4 v = s.vec();
        return (v.array() >= state_lower.array() - tol).all() &&
               (v.array() <= state_upper.array() + tol).all();
    }
    bool input_in_bounds(const ControlInput &u, double tol = 0.0) const {
        const Vec2 v = u.vec();
        return (v.array() >= input_lower.array() - tol).all() &&
               (v.array() <= input_upper.array() + tol).all();
    }
    ControlInput clamp_input(const ControlInput &u) const {
        return ControlInput::from_vec(u.vec().cwiseMax(input_lower).cwiseMin(input_upper));
    }
};

}  // namespace gridmpc

#endif  // GRIDMPC_DYNAMICS_HPP
