#pragma once

#include "rfkit/types.hpp"

namespace rfkit {

// Pearson correlation. Throws DataError on length mismatch or zero variance.
double pearson(const Vector& a, const Vector& b);

// Pearson correlation, 0 when either side has zero variance.
double correlation_or_zero(const Vector& a, const Vector& b);

// Mean squared error between the Frobenius-normalised inputs.
double normalized_mse(const Vector& w_est, const Vector& w_true);

}  // namespace rfkit
