#pragma once

#include <vector>

namespace impulse {

struct Band {
    double a;  // target
    double b;  // trigger
};

/// Band policy: on reaching trigger b_k from below, move to target a_k.
/// Every band shares the slope beta of the transformed value line
/// W(y) = D + beta (y - F_lo).
struct BandPolicy {
    std::vector<Band> bands;
    double beta = 0.0;
    double D = 0.0;
    double F_lo = 0.0;
    std::vector<double> band_beta;  // slope found for each band before pooling

    bool empty() const { return bands.empty(); }
};

} // namespace impulse
