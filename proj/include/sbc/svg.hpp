#pragma once

#include <string>

#include "sbc/uniformity.hpp"

namespace sbc {

/**
 * PIT-ECDF-difference plot: step curve over a shaded simultaneous band,
 * PIT on x, ECDF difference on y, the quantity as title and an N/S note.
 * Output bytes depend only on the inputs. Throws Error when the curve and
 * envelope were built for different N (or different S for rank curves).
 */
std::string render_plot(const EcdfDiffCurve &curve, const Envelope &envelope,
                        const std::string &quantity);

} // namespace sbc
