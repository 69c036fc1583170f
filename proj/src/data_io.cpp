#include "solvegp/data_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "solvegp/linalg.hpp"
#include "solvegp/rng.hpp"

namespace solvegp {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, int file_line,
                  const std::string& column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  while (ptr < end && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
  if (ec != std::errc() || ptr != end) {
    std::ostringstream msg;
    msg << "load_csv: cannot parse cell at row " << file_line << ", column \""
        << column << "\"";
    throw std::invalid_argument(msg.str());
  }
  return value;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Matrix Dataset::rows_of(const std::vector<int>& idx) const {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(i) = X.row(idx[i]);
  return out;
}

Vector Dataset::targets_of(const std::vector<int>& idx) const {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
  return out;
}

RawData load_csv(const std::string& path, const std::string& target_column) {
  std::ifstream in(path);
  check_arg(in.good(), "load_csv: cannot open " + path);

  std::string line;
  check_arg(static_cast<bool>(std::getline(in, line)),
            "load_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_line(line);

  int target = -1;
  for (size_t j = 0; j < header.size(); ++j)
    if (header[j] == target_column) target = static_cast<int>(j);
  check_arg(target >= 0,
            "load_csv: missing target column \"" + target_column + "\"");

  std::vector<std::vector<double>> rows;
  int file_line = 1;
  while (std::getline(in, line)) {
    ++file_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line);
    check_arg(cells.size() == header.size(),
              "load_csv: wrong cell count at row " + std::to_string(file_line));
    std::vector<double> row(cells.size());
    for (size_t j = 0; j < cells.size(); ++j)
      row[j] = parse_cell(cells[j], file_line, header[j]);
    rows.push_back(std::move(row));
  }

  RawData out;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = static_cast<Eigen::Index>(header.size()) - 1;
  out.X.resize(n, d);
  out.y.resize(n);
  out.target_name = target_column;
  for (size_t j = 0; j < header.size(); ++j)
    if (static_cast<int>(j) != target) out.feature_names.push_back(header[j]);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index k = 0;
    for (size_t j = 0; j < header.size(); ++j) {
      if (static_cast<int>(j) == target) {
        out.y[i] = rows[i][j];
      } else {
        out.X(i, k++) = rows[i][j];
      }
    }
  }
  return out;
}

void save_csv(const std::string& path, const RawData& data) {
  check_arg(static_cast<Eigen::Index>(data.feature_names.size()) ==
                data.X.cols(),
            "save_csv: feature name count mismatch");
  std::ofstream out(path);
  check_arg(out.good(), "save_csv: cannot open " + path);
  for (const auto& name : data.feature_names) out << name << ",";
  out << data.target_name << "\n";
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j)
      out << format_double(data.X(i, j)) << ",";
    out << format_double(data.y[i]) << "\n";
  }
}

Dataset standardize_and_split(const RawData& raw, uint64_t seed,
                              const std::vector<double>& fractions) {
  check_arg(fractions.size() == 2 || fractions.size() == 3,
            "standardize_and_split: need 2 or 3 fractions");
  double total = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  check_arg(std::abs(total - 1.0) < 1e-9,
            "standardize_and_split: fractions must sum to 1");
  const Eigen::Index n = raw.X.rows();

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  SplitMix64 rng(seed);
  fisher_yates_shuffle(perm, rng);

  std::vector<Eigen::Index> counts(fractions.size());
  Eigen::Index assigned = 0;
  for (size_t k = 0; k < fractions.size(); ++k) {
    counts[k] = static_cast<Eigen::Index>(std::floor(fractions[k] * n));
    check_arg(fractions[k] == 0.0 || counts[k] >= 1,
              "standardize_and_split: split smaller than 1 point");
    assigned += counts[k];
  }
  counts[0] += n - assigned;  // leftover goes to the training split

  Dataset out;
  auto take = [&](Eigen::Index from, Eigen::Index count) {
    return std::vector<int>(perm.begin() + from, perm.begin() + from + count);
  };
  out.train_idx = take(0, counts[0]);
  if (fractions.size() == 3) {
    out.valid_idx = take(counts[0], counts[1]);
    out.test_idx = take(counts[0] + counts[1], counts[2]);
  } else {
    out.test_idx = take(counts[0], counts[1]);
  }

  const Eigen::Index d = raw.X.cols();
  out.x_mean.resize(d);
  out.x_std.resize(d);
  const Eigen::Index n_train = static_cast<Eigen::Index>(out.train_idx.size());
  for (Eigen::Index j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int i : out.train_idx) mean += raw.X(i, j);
    mean /= static_cast<double>(n_train);
    double var = 0.0;
    for (int i : out.train_idx) {
      const double c = raw.X(i, j) - mean;
      var += c * c;
    }
    double sd = std::sqrt(var / static_cast<double>(n_train));
    if (sd < 1e-12) sd = 1.0;
    out.x_mean[j] = mean;
    out.x_std[j] = sd;
  }
  double ym = 0.0;
  for (int i : out.train_idx) ym += raw.y[i];
  ym /= static_cast<double>(n_train);
  double yv = 0.0;
  for (int i : out.train_idx) {
    const double c = raw.y[i] - ym;
    yv += c * c;
  }
  double ysd = std::sqrt(yv / static_cast<double>(n_train));
  if (ysd < 1e-12) ysd = 1.0;
  out.y_mean = ym;
  out.y_std = ysd;

  out.X.resize(n, d);
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      out.X(i, j) = (raw.X(i, j) - out.x_mean[j]) / out.x_std[j];
    out.y[i] = (raw.y[i] - out.y_mean) / out.y_std;
  }
  return out;
}

double snelson_like_mean(double x) {
  return std::sin(2.0 * x) + 0.25 * x;
}

RawData snelson_like_raw(int n, uint64_t seed, double noise_std) {
  check_arg(n >= 2, "snelson_like: n must be >= 2");
  SplitMix64 rng(seed);
  RawData out;
  out.X.resize(n, 1);
  out.y.resize(n);
  out.feature_names = {"x"};
  for (int i = 0; i < n; ++i) {
    // Two clusters with a gap, mimicking the classic 1D layout.
    const bool left = (rng.next() & 1ULL) == 0;
    const double x = left ? rng.uniform(0.0, 2.4) : rng.uniform(3.6, 6.0);
    out.X(i, 0) = x;
    out.y[i] = snelson_like_mean(x) + noise_std * rng.normal();
  }
  return out;
}

Dataset snelson_like(int n, uint64_t seed, double noise_std) {
  return standardize_and_split(snelson_like_raw(n, seed, noise_std), seed,
                               {0.8, 0.2});
}

Vector gp_prior_sample(const KernelSpec& kernel, const Matrix& X,
                       double noise_variance, uint64_t seed) {
  const Matrix L = jittered_cholesky(kernel_matrix(kernel, X, X)).L;
  SplitMix64 rng(seed);
  const Eigen::Index n = X.rows();
  Vector eps(n), eps2(n);
  for (Eigen::Index i = 0; i < n; ++i) eps[i] = rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) eps2[i] = rng.normal();
  return L.triangularView<Eigen::Lower>() * eps +
         std::sqrt(noise_variance) * eps2;
}

}  // namespace solvegp
