#pragma once

#include "tomoloc/dataset.hpp"
#include "tomoloc/stabilizer.hpp"
#include "tomoloc/waveplates.hpp"

namespace tomoloc {

/// Exact Born probabilities for every catalog pairing at perfect visibility.
DataMatrix ideal_matrix(const Catalog& catalog, const AngleTable& table);

/// Ideal probabilities with reduced interference visibility V: the final
/// entangled projector of each measurement chain is mixed with its
/// computational-basis diagonal, P -> V P + (1-V) diag(P), before being pulled
/// back through the waveplates. Product-effect columns are unaffected.
DataMatrix ideal_matrix(const Catalog& catalog, const AngleTable& table, double visibility);

/// Same damping applied to an already-built ideal table (columns are
/// recomputed from the angle table; row/col structure must match the catalog).
DataMatrix apply_visibility(const DataMatrix& ideal, const Catalog& catalog,
                            const AngleTable& table, double visibility);

/// Draw per-cell counts: counts = round(clamp(N p + g kappa sqrt(N p (1-p)), 0, N))
/// with g standard normal from a counter-based per-cell stream, then
/// frequencies counts/N and sigmas max(kappa sqrt(phat(1-phat)/N), sigma_floor).
DataMatrix sample_counts(const DataMatrix& probs, const ExperimentConfig& config, int jobs = 1);

/// Exact probabilities equipped with uniform floor sigmas, for noiseless fits
/// (no rounding to counts, so a perfect model reaches chi^2 ~ 0).
DataMatrix noiseless_dataset(const Catalog& catalog, const AngleTable& table,
                             double visibility = 1.0, double sigma_floor = 1e-4);

/// Restrict to the real-sector rows and columns (catalog order preserved, so
/// the 16 real product elements come first in both directions).
DataMatrix extract_real_submatrix(const DataMatrix& D, const Catalog& catalog);

/// Restrict to arbitrary catalog index subsets (rows/cols must be present).
DataMatrix submatrix(const DataMatrix& D, const std::vector<int>& row_ids,
                     const std::vector<int>& col_ids);

}  // namespace tomoloc
