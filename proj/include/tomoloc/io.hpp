#pragma once

#include <map>
#include <string>
#include <vector>

#include "tomoloc/fitter.hpp"
#include "tomoloc/ranks.hpp"

namespace tomoloc {

/// Catalog listing: index, label, flags, ket components and GPT state.
void write_catalog_csv(const Catalog& catalog, const std::string& path);

/// Frequency table with labeled rows/columns at `path`; counts, trials and
/// sigmas go to the long-format sidecar `path` with extension replaced by
/// "_cells.csv" (row_label,col_label,count,trials,sigma). Ideal tables write
/// only the frequency file.
void write_data_matrix(const DataMatrix& D, const std::string& path);

/// Rebuild a DataMatrix from the two files; labels are resolved against the
/// catalog and must all exist.
DataMatrix read_data_matrix(const std::string& path, const Catalog& catalog);

/// Portable numeric text serialization of a fit (round-trips exactly).
void write_fit(const FitResult& fit, const std::string& path);
FitResult read_fit(const std::string& path, const Catalog& catalog, const AngleTable& table);

void write_scan_csv(const DimensionScan& scan, const std::string& path);
void write_selection_csv(const DimensionScan& scan, const std::string& path);
void write_spectra_csv(const std::vector<RankReport>& reports, const std::string& path);
void write_secondary_csv(const SecondarySets& sets, const Catalog& catalog,
                         const std::string& path);
void write_verdicts_csv(const std::vector<LocalityVerdict>& verdicts, const std::string& path);
void write_calibration_csv(const CalibrationResult& cal, const std::string& path);

/// Flat key=value config files ('#' starts a comment). Unknown keys raise a
/// validation error naming the line.
std::map<std::string, std::string> read_key_values(const std::string& path,
                                                   const std::vector<std::string>& known_keys);
void write_key_values(const std::vector<std::pair<std::string, std::string>>& entries,
                      const std::string& path);

/// Shortest decimal form that round-trips a double exactly.
std::string format_double(double v);

}  // namespace tomoloc
