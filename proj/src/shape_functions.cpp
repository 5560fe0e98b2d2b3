#include "sbfem/shape_functions.hpp"

#include <cmath>

namespace sbfem {

namespace {

QuadratureRule tensor_gauss(int order) {
    std::vector<double> x, w;
    if (order == 2) {
        const double a = 1.0 / std::sqrt(3.0);
        x = {-a, a};
        w = {1.0, 1.0};
    } else {
        const double a = std::sqrt(0.6);
        x = {-a, 0.0, a};
        w = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    }
    QuadratureRule rule{{}, 2 * order - 1};
    for (std::size_t j = 0; j < x.size(); ++j)
        for (std::size_t i = 0; i < x.size(); ++i) rule.points.push_back({x[i], x[j], w[i] * w[j]});
    return rule;
}

QuadratureRule triangle_3() {
    const double a = 1.0 / 6.0, b = 2.0 / 3.0, w = 1.0 / 6.0;
    return {{{a, a, w}, {b, a, w}, {a, b, w}}, 2};
}

// Strang-Fix / Dunavant degree-4 rule.
QuadratureRule triangle_6() {
    const double a = 0.44594849091596488632, wa = 0.22338158967801146570 / 2.0;
    const double b = 0.091576213509770743460, wb = 0.10995174365532186764 / 2.0;
    return {{{a, a, wa},
             {1.0 - 2.0 * a, a, wa},
             {a, 1.0 - 2.0 * a, wa},
             {b, b, wb},
             {1.0 - 2.0 * b, b, wb},
             {b, 1.0 - 2.0 * b, wb}},
            4};
}

}  // namespace

const QuadratureRule& gauss_rule(SurfaceKind kind) {
    static const QuadratureRule q4 = tensor_gauss(2);
    static const QuadratureRule q8 = tensor_gauss(3);
    static const QuadratureRule t3 = triangle_3();
    static const QuadratureRule t6 = triangle_6();
    switch (kind) {
        case SurfaceKind::T3: return t3;
        case SurfaceKind::T6: return t6;
        case SurfaceKind::Q8: return q8;
        case SurfaceKind::Q4: break;
    }
    return q4;
}

}  // namespace sbfem
