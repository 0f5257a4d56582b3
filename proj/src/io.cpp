#include "tomoloc/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tomoloc {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCategory::io, "cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::io, "cannot open for reading: " + path);
  return in;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string sidecar_path(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string stem = dot == std::string::npos ? path : path.substr(0, dot);
  return stem + "_cells.csv";
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    require(pos == s.size(), ErrorCategory::io, "trailing characters in number: " + where);
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(ErrorCategory::io, "malformed number '" + s + "' in " + where);
  }
}

long parse_long(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    require(pos == s.size(), ErrorCategory::io, "trailing characters in integer: " + where);
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(ErrorCategory::io, "malformed integer '" + s + "' in " + where);
  }
}

}  // namespace

void write_catalog_csv(const Catalog& catalog, const std::string& path) {
  auto out = open_out(path);
  out << "index,label,is_product,is_real";
  for (int k = 0; k < 4; ++k) out << ",ket_re_" << k << ",ket_im_" << k;
  for (int k = 0; k < 16; ++k) out << ",gpt_" << k;
  out << "\n";
  for (const auto& el : catalog.elements) {
    out << el.index << ',' << el.label << ',' << (el.is_product ? 1 : 0) << ','
        << (el.is_real ? 1 : 0);
    for (int k = 0; k < 4; ++k)
      out << ',' << format_double(el.ket[k].real()) << ',' << format_double(el.ket[k].imag());
    for (int k = 0; k < 16; ++k) out << ',' << format_double(el.gpt_state[k]);
    out << "\n";
  }
  require(out.good(), ErrorCategory::io, "write failed: " + path);
}

void write_data_matrix(const DataMatrix& D, const std::string& path) {
  auto out = open_out(path);
  out << "row_label";
  for (const auto& l : D.col_labels) out << ',' << l;
  out << "\n";
  for (int i = 0; i < D.rows(); ++i) {
    out << D.row_labels[i];
    for (int j = 0; j < D.cols(); ++j) out << ',' << format_double(D.freqs(i, j));
    out << "\n";
  }
  require(out.good(), ErrorCategory::io, "write failed: " + path);
  if (!D.sampled) return;
  auto side = open_out(sidecar_path(path));
  side << "# kappa=" << format_double(D.kappa) << " visibility=" << format_double(D.visibility)
       << " sigma_floor=" << format_double(D.sigma_floor) << " drift=" << format_double(D.drift)
       << " seed=" << D.seed << "\n";
  side << "row_label,col_label,count,trials,sigma\n";
  for (int i = 0; i < D.rows(); ++i)
    for (int j = 0; j < D.cols(); ++j)
      side << D.row_labels[i] << ',' << D.col_labels[j] << ',' << D.counts(i, j) << ','
           << D.trials(i, j) << ',' << format_double(D.sigmas(i, j)) << "\n";
  require(side.good(), ErrorCategory::io, "write failed: " + sidecar_path(path));
}

DataMatrix read_data_matrix(const std::string& path, const Catalog& catalog) {
  auto in = open_in(path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCategory::io,
          "empty data matrix file: " + path);
  const auto header = split_csv_line(line);
  require(header.size() >= 2 && header[0] == "row_label", ErrorCategory::io,
          "malformed data matrix header: " + path);

  auto find_label = [&](const std::string& label) {
    for (const auto& el : catalog.elements)
      if (el.label == label) return el.index;
    throw Error(ErrorCategory::io, "unknown catalog label '" + label + "' in " + path);
  };

  DataMatrix D;
  const int m = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < m; ++j) {
    D.col_labels.push_back(header[j + 1]);
    D.col_ids.push_back(find_label(header[j + 1]));
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    require(static_cast<int>(fields.size()) == m + 1, ErrorCategory::io,
            "row width mismatch in " + path);
    D.row_labels.push_back(fields[0]);
    D.row_ids.push_back(find_label(fields[0]));
    std::vector<double> vals;
    for (int j = 0; j < m; ++j) vals.push_back(parse_double(fields[j + 1], path));
    rows.push_back(std::move(vals));
  }
  const int n = static_cast<int>(rows.size());
  require(n > 0, ErrorCategory::io, "data matrix has no rows: " + path);
  D.freqs.resize(n, m);
  D.sigmas = Eigen::MatrixXd::Zero(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) D.freqs(i, j) = rows[i][j];

  std::ifstream side(sidecar_path(path));
  if (!side.good()) return D;  // ideal table: frequencies only
  D.sampled = true;
  D.counts = Eigen::MatrixXi::Zero(n, m);
  D.trials = Eigen::MatrixXi::Zero(n, m);
  auto row_of = [&](const std::string& label) {
    for (int i = 0; i < n; ++i)
      if (D.row_labels[i] == label) return i;
    throw Error(ErrorCategory::io, "sidecar row label not in matrix: " + label);
  };
  auto col_of = [&](const std::string& label) {
    for (int j = 0; j < m; ++j)
      if (D.col_labels[j] == label) return j;
    throw Error(ErrorCategory::io, "sidecar col label not in matrix: " + label);
  };
  require(static_cast<bool>(std::getline(side, line)), ErrorCategory::io,
          "empty sidecar for " + path);
  if (!line.empty() && line[0] == '#') {
    std::istringstream meta(line.substr(1));
    std::string tok;
    while (meta >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
      if (key == "kappa") D.kappa = parse_double(value, path);
      else if (key == "visibility") D.visibility = parse_double(value, path);
      else if (key == "sigma_floor") D.sigma_floor = parse_double(value, path);
      else if (key == "drift") D.drift = parse_double(value, path);
      else if (key == "seed") D.seed = static_cast<std::uint64_t>(parse_long(value, path));
    }
    require(static_cast<bool>(std::getline(side, line)), ErrorCategory::io,
            "sidecar missing header for " + path);
  }
  int filled = 0;
  while (std::getline(side, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    require(f.size() == 5, ErrorCategory::io, "sidecar row width mismatch for " + path);
    const int i = row_of(f[0]), j = col_of(f[1]);
    D.counts(i, j) = static_cast<int>(parse_long(f[2], path));
    D.trials(i, j) = static_cast<int>(parse_long(f[3], path));
    D.sigmas(i, j) = parse_double(f[4], path);
    ++filled;
  }
  require(filled == n * m, ErrorCategory::io, "sidecar is missing cells for " + path);
  return D;
}

void write_fit(const FitResult& fit, const std::string& path) {
  auto out = open_out(path);
  out << "format tomoloc-fit 1\n";
  out << "d " << fit.structure.d << "\n";
  out << "converged " << (fit.converged ? 1 : 0) << "\n";
  out << "captured " << (fit.captured ? 1 : 0) << "\n";
  out << "chi2_train " << format_double(fit.chi2_train) << "\n";
  out << "chi2_test " << format_double(fit.chi2_test) << "\n";
  out << "grad_inf " << format_double(fit.grad_inf) << "\n";
  out << "iterations " << fit.iterations << "\n";
  out << "attempts " << fit.attempts << "\n";
  out << "best_restart " << fit.best_restart << "\n";
  out << "seed " << fit.seed << "\n";
  out << "row_ids " << fit.structure.row_ids.size();
  for (int id : fit.structure.row_ids) out << ' ' << id;
  out << "\n";
  out << "col_ids " << fit.structure.col_ids.size();
  for (int id : fit.structure.col_ids) out << ' ' << id;
  out << "\n";
  out << "theta " << fit.theta.size();
  for (int k = 0; k < fit.theta.size(); ++k) out << ' ' << format_double(fit.theta[k]);
  out << "\n";
  require(out.good(), ErrorCategory::io, "write failed: " + path);
}

FitResult read_fit(const std::string& path, const Catalog& catalog, const AngleTable& table) {
  auto in = open_in(path);
  std::string key;
  FitResult fit;
  int d = 0;
  std::vector<int> row_ids, col_ids;
  std::string magic, version;
  in >> magic >> version;
  int fmt = 0;
  in >> fmt;
  require(magic == "format" && version == "tomoloc-fit" && fmt == 1, ErrorCategory::io,
          "not a fit file: " + path);
  auto next_double = [&]() {
    std::string tok;
    require(static_cast<bool>(in >> tok), ErrorCategory::io, "truncated fit file: " + path);
    return parse_double(tok, path);  // std::stod handles nan/inf
  };
  auto read_ids = [&](std::vector<int>& ids) {
    std::size_t count = 0;
    in >> count;
    ids.resize(count);
    for (auto& id : ids) in >> id;
  };
  while (in >> key) {
    if (key == "d") in >> d;
    else if (key == "converged") { int v; in >> v; fit.converged = v != 0; }
    else if (key == "captured") { int v; in >> v; fit.captured = v != 0; }
    else if (key == "chi2_train") fit.chi2_train = next_double();
    else if (key == "chi2_test") fit.chi2_test = next_double();
    else if (key == "grad_inf") fit.grad_inf = next_double();
    else if (key == "iterations") in >> fit.iterations;
    else if (key == "attempts") in >> fit.attempts;
    else if (key == "best_restart") in >> fit.best_restart;
    else if (key == "seed") in >> fit.seed;
    else if (key == "row_ids") read_ids(row_ids);
    else if (key == "col_ids") read_ids(col_ids);
    else if (key == "theta") {
      std::size_t count = 0;
      in >> count;
      fit.theta.resize(static_cast<int>(count));
      for (std::size_t k = 0; k < count; ++k) fit.theta[static_cast<int>(k)] = next_double();
    } else {
      throw Error(ErrorCategory::io, "unknown fit-file key '" + key + "' in " + path);
    }
  }
  require(d > 0 && !row_ids.empty() && !col_ids.empty() && fit.theta.size() > 0,
          ErrorCategory::io, "incomplete fit file: " + path);
  fit.structure = ModelStructure::build(catalog, table, row_ids, col_ids, d);
  require(fit.theta.size() == fit.structure.num_params(), ErrorCategory::io,
          "theta length inconsistent with structure in " + path);
  const double cells = static_cast<double>(fit.structure.n) * fit.structure.m;
  fit.chi2_train_per_cell = fit.chi2_train / cells;
  fit.chi2_test_per_cell = fit.chi2_test / cells;
  return fit;
}

void write_scan_csv(const DimensionScan& scan, const std::string& path) {
  auto out = open_out(path);
  out << "dim2,mean_train_per_cell,std_train_per_cell,mean_test_per_cell,std_test_per_cell,"
         "converged,excluded,selected\n";
  for (const auto& row : scan.rows)
    out << row.dim2 << ',' << format_double(row.mean_train) << ','
        << format_double(row.std_train) << ',' << format_double(row.mean_test) << ','
        << format_double(row.std_test) << ',' << row.converged << ',' << row.excluded << ','
        << (row.dim2 == scan.selected_dim2 ? 1 : 0) << "\n";
  require(out.good(), ErrorCategory::io, "write failed: " + path);
}

void write_selection_csv(const DimensionScan& scan, const std::string& path) {
  auto out = open_out(path);
  out << "repetition,selected_dim2";
  for (int dim2 : scan.dims) out << ",train_" << dim2 << ",test_" << dim2;
  out << "\n";
  for (std::size_t rep = 0; rep < scan.fits.size(); ++rep) {
    out << rep << ',' << scan.selection[rep];
    for (std::size_t k = 0; k < scan.dims.size(); ++k) {
      const FitResult& f = scan.fits[rep][k];
      out << ',' << format_double(f.chi2_train_per_cell) << ','
          << format_double(f.chi2_test_per_cell);
    }
    out << "\n";
  }
  require(out.good(), ErrorCategory::io, "write failed: " + path);
}

void write_spectra_csv(const std::vector<RankReport>& reports, const std::string& path) {
  auto out = open_out(path);
  out << "matrix,k,singular_value,tau,effective_rank\n";
  for (const auto& rep : reports)
    for (int k = 0; k < rep.singular_values.size(); ++k)
      out << rep.name << ',' << k << ',' << format_double(rep.singular_values[k]) << ','
          << format_double(rep.tau) << ',' << rep.effective_rank << "\n";
  require(out.good(), ErrorCategory::io, "write failed: " + path);
}

void write_secondary_csv(const SecondarySets& sets, const Catalog& catalog,
                         const std::string& path) {
  auto out = open_out(path);
  out << "side,target_id,target_label,residual,violation,feasible,iterations\n";
  auto dump = [&](const char* side, const std::vector<SecondarySolution>& sols) {
    for (const auto& s : sols)
      out << side << ',' << s.target_id << ',' << catalog.elements[s.target_id].label << ','
          << format_double(s.residual) << ',' << format_double(s.violation) << ','
          << (s.feasible ? 1 : 0) << ',' << s.iterations << "\n";
  };
  dump("state", sets.states);
  dump("effect", sets.effects);
  require(out.good(), ErrorCategory::io, "write failed: " + path);
}

void write_verdicts_csv(const std::vector<LocalityVerdict>& verdicts, const std::string& path) {
  auto out = open_out(path);
  out << "context,rank_primary,rank_secondary,tau,holds\n";
  for (const auto& v : verdicts)
    out << v.context << ',' << v.primary.effective_rank << ',' << v.secondary.effective_rank
        << ',' << format_double(v.primary.tau) << ',' << (v.holds ? 1 : 0) << "\n";
  require(out.good(), ErrorCategory::io, "write failed: " + path);
}

void write_calibration_csv(const CalibrationResult& cal, const std::string& path) {
  auto out = open_out(path);
  out << "trial,survive_real,vanish_real,survive_realprod,vanish_realprod\n";
  for (int t = 0; t < cal.trials; ++t)
    out << t << ',' << format_double(cal.survive_real[t]) << ','
        << format_double(cal.vanish_real[t]) << ',' << format_double(cal.survive_realprod[t])
        << ',' << format_double(cal.vanish_realprod[t]) << "\n";
  require(out.good(), ErrorCategory::io, "write failed: " + path);
}

std::map<std::string, std::string> read_key_values(const std::string& path,
                                                   const std::vector<std::string>& known_keys) {
  auto in = open_in(path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCategory::validation,
            path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(std::find(known_keys.begin(), known_keys.end(), key) != known_keys.end(),
            ErrorCategory::validation,
            path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

void write_key_values(const std::vector<std::pair<std::string, std::string>>& entries,
                      const std::string& path) {
  auto out = open_out(path);
  for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
  require(out.good(), ErrorCategory::io, "write failed: " + path);
}

}  // namespace tomoloc
