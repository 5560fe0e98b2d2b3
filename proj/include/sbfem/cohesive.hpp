#pragma once

// Normal traction-separation law with exponential damage, and a 1-D cyclic
// driver coupling a bulk spring in series with the interface through a
// unilateral gap.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace sbfem {

struct CohesiveParams {
    double kn = 1e6;         ///< initial stiffness, Pa per m of opening
    double delta_o = 1e-3;   ///< m, damage initiation
    double delta_f = 5e-3;   ///< m, complete failure
    double alpha = 2.0;      ///< exponential coefficient; 0 gives linear softening

    /// Throws std::invalid_argument unless 0 < delta_o < delta_f, kn > 0, alpha >= 0.
    void check() const;
};

struct CohesiveState {
    double delta_max = 0.0;  ///< m, largest opening seen
    double damage = 0.0;
};

/// Damage for a given maximum opening. Zero up to delta_o, one from delta_f.
double damage(double delta_max, const CohesiveParams& p);

struct TractionUpdate {
    double traction = 0.0;  ///< Pa
    CohesiveState state;
};

/// Secant law t = (1 - D) kn delta for delta > 0, updating the history.
/// Closed or penetrating openings (delta <= 0) carry no cohesive traction.
TractionUpdate traction(double delta, const CohesiveState& state, const CohesiveParams& p);

/// Sine cycles of growing amplitude: d(t) = A_k sin(2 pi (t - k T) / T) on
/// the k-th period.
struct CyclicProgram {
    std::vector<double> amplitudes{0.8e-3, 2e-3, 6e-3};  ///< m
    double period = 1.0;                                  ///< s

    double operator()(double t) const;
    double duration() const { return period * static_cast<double>(amplitudes.size()); }
};

struct CyclicSample {
    double t = 0.0;
    double d = 0.0;        ///< m, applied displacement
    double delta = 0.0;    ///< m, interface opening
    double traction = 0.0; ///< Pa
    double damage = 0.0;
};

struct CyclicDriverOptions {
    double bulk_stiffness = 2e11 / 6.0;  ///< Pa per m, series spring E / H
    double dt = 0.01;                    ///< s, output step
    int max_bisection = 200;
};

/// Response of bulk spring + interface under d(t) on [0, t_end]. Samples are
/// taken every dt, plus the instants where the opening first reaches
/// delta_o and delta_f so that the initiation peak is captured exactly.
/// Throws Error when the scalar equilibrium solve fails at a step.
std::vector<CyclicSample> cyclic_driver(const std::function<double(double)>& d, double t_end,
                                        const CohesiveParams& p,
                                        const CyclicDriverOptions& opt = {});

/// CSV with header t,d,delta_n,t_n,D.
std::string cohesive_csv(const std::vector<CyclicSample>& history);

/// Parses "name,value" rows: kn, delta_o, delta_f, alpha, bulk_stiffness, dt,
/// period, amplitudes (values separated by ';'). Unknown names are errors.
struct CohesiveDemoConfig {
    CohesiveParams params;
    CyclicDriverOptions options;
    CyclicProgram program;
};
CohesiveDemoConfig parse_cohesive_config(std::istream& in, const std::string& source = "<params>");

}  // namespace sbfem
