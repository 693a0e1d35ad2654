#include "paide/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

namespace paide {

void Dataset::validate() const {
  if (inputs.rows() != targets.rows()) {
    throw std::invalid_argument("dataset '" + name + "': input and target row counts differ");
  }
  if (!inputs.allFinite() || !targets.allFinite()) {
    throw std::invalid_argument("dataset '" + name + "': non-finite entries");
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.name = name;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    if (src >= inputs.rows()) throw std::out_of_range("dataset row index out of range");
    out.inputs.row(static_cast<Eigen::Index>(r)) = inputs.row(src);
    out.targets.row(static_cast<Eigen::Index>(r)) = targets.row(src);
  }
  return out;
}

void Dataset::append(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (inputs.size() == 0 && inputs.cols() == 0) {
    inputs.resize(0, x.size());
    targets.resize(0, y.size());
  }
  if (x.size() != inputs.cols() || y.size() != targets.cols()) {
    throw std::invalid_argument("dataset append: dimension mismatch");
  }
  const Eigen::Index n = inputs.rows();
  inputs.conservativeResize(n + 1, Eigen::NoChange);
  targets.conservativeResize(n + 1, Eigen::NoChange);
  inputs.row(n) = x.transpose();
  targets.row(n) = y.transpose();
}

SyntheticTask SyntheticTask::from_name(std::string_view name, TaskOptions options) {
  if (name == "hetero") return SyntheticTask(Kind::Hetero, options);
  if (name == "bimodal") return SyntheticTask(Kind::Bimodal, options);
  throw std::invalid_argument("unknown dataset '" + std::string(name) + "'");
}

double SyntheticTask::sample_input(Rng& rng) const {
  if (kind_ == Kind::Hetero) {
    static constexpr std::array<double, 3> centers{-4.0, 0.0, 4.0};
    static constexpr std::array<double, 3> spreads{0.4, 0.9, 0.4};
    std::uniform_int_distribution<int> category(0, 2);
    const auto c = static_cast<std::size_t>(category(rng));
    const double sd = options_.hetero_spread == SpreadParam::Variance ? std::sqrt(spreads[c]) : spreads[c];
    std::normal_distribution<double> x(centers[c], sd);
    return x(rng);
  }
  const double rate = options_.bimodal_lambda == ExponentialParam::Rate ? 2.0 : 0.5;
  std::exponential_distribution<double> x(rate);
  return x(rng);
}

double SyntheticTask::label(double x, Rng& rng) const {
  std::normal_distribution<double> z(0.0, 1.0);
  if (kind_ == Kind::Hetero) {
    return 7.0 * std::sin(x) + 3.0 * z(rng) * std::abs(std::cos(x / 2.0));
  }
  std::bernoulli_distribution branch(0.5);
  const bool second = branch(rng);
  const double noise = z(rng);
  return second ? 10.0 * std::cos(x) + noise + 20.0 - x : 10.0 * std::sin(x) + noise;
}

Dataset SyntheticTask::generate(std::size_t n_points, Rng& rng) const {
  if (n_points < 1) throw std::invalid_argument("n_points must be at least 1");
  Dataset out;
  out.name = name();
  out.inputs.resize(static_cast<Eigen::Index>(n_points), 1);
  out.targets.resize(static_cast<Eigen::Index>(n_points), 1);
  for (Eigen::Index i = 0; i < out.inputs.rows(); ++i) {
    const double x = sample_input(rng);
    out.inputs(i, 0) = x;
    out.targets(i, 0) = label(x, rng);
  }
  return out;
}

Dataset gen_hetero(std::size_t n_points, Rng& rng, TaskOptions options) {
  return SyntheticTask(SyntheticTask::Kind::Hetero, options).generate(n_points, rng);
}

Dataset gen_bimodal(std::size_t n_points, Rng& rng, TaskOptions options) {
  return SyntheticTask(SyntheticTask::Kind::Bimodal, options).generate(n_points, rng);
}

// CSV ---------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t')) c.remove_suffix(1);
  }
  return cells;
}

std::string column_name(char prefix, Eigen::Index k) { return prefix + std::to_string(k); }

/// Parses all rows and keeps the columns listed in `wanted` (header names).
/// With `inputs_only`, y columns in the file are ignored; any other column
/// outside `wanted` is a dimension mismatch.
Eigen::MatrixXd read_columns(const std::filesystem::path& path, const std::vector<std::string>& wanted,
                             bool inputs_only) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw CsvError("'" + path.string() + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_commas(line);

  std::vector<std::size_t> positions;
  for (const auto& name : wanted) {
    std::size_t pos = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) pos = c;
    }
    if (pos == header.size()) throw CsvError("'" + path.string() + "': missing column " + name);
    positions.push_back(pos);
  }
  for (const auto& name : header) {
    if (std::find(wanted.begin(), wanted.end(), name) != wanted.end()) continue;
    if (inputs_only && !name.empty() && name.front() == 'y') continue;
    throw CsvError("'" + path.string() + "': dimension mismatch, unexpected column " + std::string(name));
  }

  std::vector<double> values;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw CsvError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                     std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < positions.size(); ++k) {
      const std::string_view cell = cells[positions[k]];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || !std::isfinite(v)) {
        throw CsvError("'" + path.string() + "' line " + std::to_string(line_no) + ", column " +
                       wanted[k] + ": invalid number '" + std::string(cell) + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(wanted.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < wanted.size(); ++k) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = values[r * wanted.size() + k];
    }
  }
  return out;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, Eigen::Index input_dim, Eigen::Index output_dim) {
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("csv dimensions must be positive");
  std::vector<std::string> wanted;
  for (Eigen::Index k = 0; k < input_dim; ++k) wanted.push_back(column_name('x', k));
  for (Eigen::Index k = 0; k < output_dim; ++k) wanted.push_back(column_name('y', k));
  const Eigen::MatrixXd table = read_columns(path, wanted, false);
  Dataset out;
  out.name = path.stem().string();
  out.inputs = table.leftCols(input_dim);
  out.targets = table.rightCols(output_dim);
  return out;
}

Eigen::MatrixXd load_inputs_csv(const std::filesystem::path& path, Eigen::Index input_dim) {
  if (input_dim < 1) throw std::invalid_argument("csv dimensions must be positive");
  std::vector<std::string> wanted;
  for (Eigen::Index k = 0; k < input_dim; ++k) wanted.push_back(column_name('x', k));
  return read_columns(path, wanted, true);
}

std::string format_real(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf.data(), ptr);
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsvError("cannot write '" + path.string() + "'");
  for (Eigen::Index k = 0; k < data.input_dim(); ++k) out << (k ? "," : "") << column_name('x', k);
  for (Eigen::Index k = 0; k < data.output_dim(); ++k) out << ',' << column_name('y', k);
  out << '\n';
  for (Eigen::Index r = 0; r < data.inputs.rows(); ++r) {
    for (Eigen::Index k = 0; k < data.input_dim(); ++k) out << (k ? "," : "") << format_real(data.inputs(r, k));
    for (Eigen::Index k = 0; k < data.output_dim(); ++k) out << ',' << format_real(data.targets(r, k));
    out << '\n';
  }
  if (!out) throw CsvError("write failed for '" + path.string() + "'");
}

// Pools -------------------------------------------------------------------

Pool::Pool(Eigen::MatrixXd candidates, Labeler labeler, std::vector<std::size_t> source_rows)
    : candidates_(std::move(candidates)),
      labeler_(std::move(labeler)),
      source_rows_(std::move(source_rows)),
      acquired_(static_cast<std::size_t>(candidates_.rows()), false) {}

Eigen::VectorXd Pool::acquire(std::size_t i) {
  if (i >= size()) throw std::out_of_range("pool index out of range");
  if (acquired_[i]) throw std::logic_error("pool candidate " + std::to_string(i) + " already acquired");
  acquired_[i] = true;
  return labeler_(i);
}

Pool make_pool(const SyntheticTask& task, std::size_t size, Rng& rng) {
  Eigen::MatrixXd candidates(static_cast<Eigen::Index>(size), 1);
  for (Eigen::Index i = 0; i < candidates.rows(); ++i) candidates(i, 0) = task.sample_input(rng);
  const std::uint64_t label_seed = rng();
  auto labeler = [task, label_seed, xs = candidates](std::size_t i) {
    Rng label_rng = make_rng(label_seed, {i});
    return Eigen::VectorXd::Constant(1, task.label(xs(static_cast<Eigen::Index>(i), 0), label_rng));
  };
  return Pool(std::move(candidates), std::move(labeler));
}

Pool make_pool(const Dataset& source, std::size_t size, Rng& rng, const std::vector<bool>& used) {
  std::vector<std::size_t> available;
  for (std::size_t r = 0; r < source.rows(); ++r) {
    if (used.empty() || !used.at(r)) available.push_back(r);
  }
  if (size > available.size()) {
    throw std::runtime_error("pool exhausted: requested " + std::to_string(size) + " candidates, " +
                             std::to_string(available.size()) + " rows remain");
  }
  // Partial Fisher-Yates with explicit index draws so the order does not
  // depend on the standard library's shuffle.
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, available.size() - 1);
    std::swap(available[i], available[pick(rng)]);
  }
  available.resize(size);
  Eigen::MatrixXd candidates(static_cast<Eigen::Index>(size), source.input_dim());
  Eigen::MatrixXd hidden(static_cast<Eigen::Index>(size), source.output_dim());
  for (std::size_t i = 0; i < size; ++i) {
    candidates.row(static_cast<Eigen::Index>(i)) = source.inputs.row(static_cast<Eigen::Index>(available[i]));
    hidden.row(static_cast<Eigen::Index>(i)) = source.targets.row(static_cast<Eigen::Index>(available[i]));
  }
  auto labeler = [hidden](std::size_t i) -> Eigen::VectorXd {
    return hidden.row(static_cast<Eigen::Index>(i)).transpose();
  };
  return Pool(std::move(candidates), std::move(labeler), std::move(available));
}

}  // namespace paide
