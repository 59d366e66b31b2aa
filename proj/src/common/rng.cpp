#include "common/rng.hpp"

#include <cmath>

namespace prcaps {

double Rng::gaussian() {
    // Box-Muller on our own uniform bits; std::normal_distribution is
    // implementation-defined and would break cross-platform determinism.
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

} // namespace prcaps
