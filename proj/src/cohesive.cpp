#include "sbfem/cohesive.hpp"

#include "sbfem/error.hpp"
#include "sbfem/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <stdexcept>

namespace sbfem {

void CohesiveParams::check() const {
    if (!(kn > 0.0)) throw std::invalid_argument("cohesive stiffness must be positive");
    if (!(delta_o > 0.0 && delta_o < delta_f))
        throw std::invalid_argument("cohesive openings need 0 < delta_o < delta_f");
    if (!(alpha >= 0.0)) throw std::invalid_argument("cohesive exponent must be non-negative");
}

double damage(double delta_max, const CohesiveParams& p) {
    if (delta_max <= p.delta_o) return 0.0;
    if (delta_max >= p.delta_f) return 1.0;
    const double x = (delta_max - p.delta_o) / (p.delta_f - p.delta_o);
    // Fraction of the softening branch consumed; tends to x as alpha -> 0.
    const double consumed = p.alpha < 1e-12 ? x : std::expm1(-p.alpha * x) / std::expm1(-p.alpha);
    return std::clamp(1.0 - (p.delta_o / delta_max) * (1.0 - consumed), 0.0, 1.0);
}

TractionUpdate traction(double delta, const CohesiveState& state, const CohesiveParams& p) {
    TractionUpdate out;
    out.state = state;
    if (delta <= 0.0) return out;
    if (delta > state.delta_max) {
        out.state.delta_max = delta;
        out.state.damage = std::max(state.damage, damage(delta, p));
    }
    out.traction = (1.0 - out.state.damage) * p.kn * delta;
    return out;
}

double CyclicProgram::operator()(double t) const {
    if (t <= 0.0 || amplitudes.empty()) return 0.0;
    const double cycles = t / period;
    auto k = static_cast<std::size_t>(std::floor(cycles));
    double phase = cycles - static_cast<double>(k);
    if (k >= amplitudes.size()) return 0.0;
    // The end of a cycle belongs to that cycle, not to the next one.
    if (phase == 0.0 && k > 0) {
        --k;
        phase = 1.0;
    }
    return amplitudes[k] * std::sin(2.0 * std::numbers::pi * phase);
}

namespace {

// Opening that balances the bulk spring and the interface for applied d.
// The residual Kb (d - delta) - t(delta) decreases in delta whenever Kb
// exceeds the softening slope, so bisection on [0, d] brackets the root.
double equilibrium_opening(double d, const CohesiveState& state, const CohesiveParams& p,
                           const CyclicDriverOptions& opt, double t) {
    if (d <= 0.0) return 0.0;
    auto residual = [&](double delta) {
        return opt.bulk_stiffness * (d - delta) - traction(delta, state, p).traction;
    };
    double lo = 0.0, hi = d;
    if (residual(hi) > 0.0) return hi;
    for (int it = 0; it < opt.max_bisection; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) return mid;
        (residual(mid) > 0.0 ? lo : hi) = mid;
    }
    if (hi - lo > 1e-12 * d)
        throw Error("cohesive driver: equilibrium bisection did not converge at t = " + format_number(t));
    return 0.5 * (lo + hi);
}

// Time in [t0, t1] where d(t) reaches `target`, assuming d(t0) < target <= d(t1).
double crossing_time(const std::function<double(double)>& d, double t0, double t1, double target) {
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (t0 + t1);
        if (mid <= t0 || mid >= t1) break;
        (d(mid) < target ? t0 : t1) = mid;
    }
    return t1;
}

}  // namespace

std::vector<CyclicSample> cyclic_driver(const std::function<double(double)>& d, double t_end,
                                        const CohesiveParams& p, const CyclicDriverOptions& opt) {
    p.check();
    if (!(opt.dt > 0.0) || !(t_end > 0.0)) throw Error("cohesive driver needs dt > 0 and t_end > 0");
    if (!(opt.bulk_stiffness > 0.0)) throw Error("cohesive driver needs a positive bulk stiffness");

    std::vector<CyclicSample> out;
    CohesiveState state;
    auto push = [&](double t, double dv, double delta) {
        const TractionUpdate tu = traction(delta, state, p);
        state = tu.state;
        out.push_back({t, dv, delta, tu.traction, state.damage});
    };

    const int steps = static_cast<int>(std::ceil(t_end / opt.dt - 1e-9));
    push(0.0, d(0.0), equilibrium_opening(d(0.0), state, p, opt, 0.0));
    double t_prev = 0.0;
    for (int i = 1; i <= steps; ++i) {
        const double t = std::min(t_end, i * opt.dt);
        const double dv = d(t);
        const double delta = equilibrium_opening(dv, state, p, opt, t);
        // Event rows where the opening first reaches initiation or failure.
        for (double level : {p.delta_o, p.delta_f}) {
            if (state.delta_max < level && delta > level) {
                const double t_n = traction(level, state, p).traction;
                const double d_level = level + t_n / opt.bulk_stiffness;
                if (d(t_prev) < d_level && d_level <= dv) {
                    const double te = crossing_time(d, t_prev, t, d_level);
                    push(te, d_level, level);
                }
            }
        }
        push(t, dv, delta);
        t_prev = t;
    }
    return out;
}

std::string cohesive_csv(const std::vector<CyclicSample>& history) {
    std::string s = "t,d,delta_n,t_n,D\n";
    for (const auto& h : history) {
        append_number(s, h.t);
        s += ',';
        append_number(s, h.d);
        s += ',';
        append_number(s, h.delta);
        s += ',';
        append_number(s, h.traction);
        s += ',';
        append_number(s, h.damage);
        s += '\n';
    }
    return s;
}

namespace {

std::string trim(std::string_view v) {
    const auto b = v.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = v.find_last_not_of(" \t\r");
    return std::string(v.substr(b, e - b + 1));
}

double parse_value(const std::string& text, const std::string& source, std::size_t line) {
    double v = 0.0;
    const char* first = text.data();
    if (!text.empty() && text[0] == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw ParseError(source, line, text, "expected a number");
    return v;
}

}  // namespace

CohesiveDemoConfig parse_cohesive_config(std::istream& in, const std::string& source) {
    CohesiveDemoConfig cfg;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string text = trim(raw.substr(0, raw.find('#')));
        if (text.empty()) continue;
        const auto comma = text.find(',');
        if (comma == std::string::npos) throw ParseError(source, line, text, "expected 'name,value'");
        const std::string name = trim(std::string_view(text).substr(0, comma));
        const std::string value = trim(std::string_view(text).substr(comma + 1));
        if (name == "name" && value == "value") continue;  // header row
        if (name == "kn") cfg.params.kn = parse_value(value, source, line);
        else if (name == "delta_o") cfg.params.delta_o = parse_value(value, source, line);
        else if (name == "delta_f") cfg.params.delta_f = parse_value(value, source, line);
        else if (name == "alpha") cfg.params.alpha = parse_value(value, source, line);
        else if (name == "bulk_stiffness") cfg.options.bulk_stiffness = parse_value(value, source, line);
        else if (name == "dt") cfg.options.dt = parse_value(value, source, line);
        else if (name == "period") cfg.program.period = parse_value(value, source, line);
        else if (name == "amplitudes") {
            cfg.program.amplitudes.clear();
            std::size_t start = 0;
            while (start <= value.size()) {
                const auto semi = value.find(';', start);
                const std::string item =
                    trim(std::string_view(value).substr(start, semi == std::string::npos ? std::string::npos : semi - start));
                cfg.program.amplitudes.push_back(parse_value(item, source, line));
                if (semi == std::string::npos) break;
                start = semi + 1;
            }
        } else {
            throw ParseError(source, line, name, "unknown parameter");
        }
    }
    try {
        cfg.params.check();
    } catch (const std::invalid_argument& e) {
        throw ParseError(source, line, "", e.what());
    }
    return cfg;
}

}  // namespace sbfem
