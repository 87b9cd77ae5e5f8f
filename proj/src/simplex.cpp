#include "wcg/simplex.hpp"

namespace wcg {

LpOutcome solve_linear_program(const LinearProgram& lp, const LpSolveOptions& opts) {
    if (opts.exact_rational) {
        detail::SimplexCore<detail::Rational> core(lp, opts);
        return core.run();
    }
    detail::SimplexCore<double> core(lp, opts);
    return core.run();
}

} // namespace wcg
