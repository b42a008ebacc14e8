#pragma once

// Audit datasets: rows of (audit features x, binary label y, model score fhat)
// with CSV ingestion and serialization.

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace klce {

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AuditRecord {
  Eigen::VectorXd x;
  int y = 0;          // in {0, 1}
  double fhat = 0.0;  // in [0, 1]
};

// Immutable after construction; safe to share across threads.
class AuditDataset {
 public:
  AuditDataset(Eigen::MatrixXd features, Eigen::VectorXd labels, Eigen::VectorXd scores,
               std::vector<std::string> feature_names)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        scores_(std::move(scores)),
        feature_names_(std::move(feature_names)) {
    validate();
  }

  Eigen::Index size() const { return labels_.size(); }
  Eigen::Index dim() const { return features_.cols(); }
  const Eigen::MatrixXd& features() const { return features_; }
  const Eigen::VectorXd& labels() const { return labels_; }
  const Eigen::VectorXd& scores() const { return scores_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  Eigen::VectorXd residuals() const { return labels_ - scores_; }

  AuditRecord record(Eigen::Index i) const {
    return AuditRecord{features_.row(i).transpose(), static_cast<int>(labels_[i]), scores_[i]};
  }

  AuditDataset with_scores(Eigen::VectorXd scores) const {
    return AuditDataset(features_, labels_, std::move(scores), feature_names_);
  }

  bool operator==(const AuditDataset& o) const {
    return features_ == o.features_ && labels_ == o.labels_ && scores_ == o.scores_ &&
           feature_names_ == o.feature_names_;
  }

 private:
  void validate() const {
    const Eigen::Index n = labels_.size();
    if (n < 2) throw ValidationError("dataset must contain at least 2 records, got " + std::to_string(n));
    if (scores_.size() != n || features_.rows() != n)
      throw ValidationError("features, labels, and scores must have the same number of rows");
    if (static_cast<Eigen::Index>(feature_names_.size()) != features_.cols())
      throw ValidationError("feature_names length must equal feature dimension");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (labels_[i] != 0.0 && labels_[i] != 1.0)
        throw ValidationError("row " + std::to_string(i + 1) + ": label must be 0 or 1");
      if (!(scores_[i] >= 0.0 && scores_[i] <= 1.0))
        throw ValidationError("row " + std::to_string(i + 1) + ": score must lie in [0, 1]");
      if (!features_.row(i).allFinite())
        throw ValidationError("row " + std::to_string(i + 1) + ": non-finite feature value");
    }
  }

  Eigen::MatrixXd features_;
  Eigen::VectorXd labels_;
  Eigen::VectorXd scores_;
  std::vector<std::string> feature_names_;
};

// Column naming for CSV ingestion. Empty feature_columns means "every column
// that is not the label or score column", in file order.
struct CsvSchema {
  std::string label_column = "y";
  std::string score_column = "p";
  std::vector<std::string> feature_columns;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& cell, Eigen::Index row, const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("row " + std::to_string(row) + ", column '" + col +
                          "': cannot parse '" + cell + "' as a number");
  }
}

}  // namespace detail

inline AuditDataset load_dataset(std::istream& in, const CsvSchema& schema = {}) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty input: missing CSV header row");
  const std::vector<std::string> header = detail::split_csv_line(line);

  auto find_col = [&](const std::string& name) -> Eigen::Index {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<Eigen::Index>(j);
    throw SchemaError("missing column '" + name + "' in CSV header");
  };

  const Eigen::Index label_idx = find_col(schema.label_column);
  const Eigen::Index score_idx = find_col(schema.score_column);

  std::vector<Eigen::Index> feature_idx;
  std::vector<std::string> feature_names;
  if (schema.feature_columns.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (static_cast<Eigen::Index>(j) == label_idx || static_cast<Eigen::Index>(j) == score_idx) continue;
      feature_idx.push_back(static_cast<Eigen::Index>(j));
      feature_names.push_back(header[j]);
    }
  } else {
    for (const auto& name : schema.feature_columns) {
      feature_idx.push_back(find_col(name));
      feature_names.push_back(name);
    }
  }
  if (feature_idx.empty()) throw SchemaError("no feature columns in CSV");

  std::vector<double> labels, scores;
  std::vector<double> feats;
  Eigen::Index row = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
    labels.push_back(detail::parse_number(cells[label_idx], row, schema.label_column));
    scores.push_back(detail::parse_number(cells[score_idx], row, schema.score_column));
    for (std::size_t k = 0; k < feature_idx.size(); ++k)
      feats.push_back(detail::parse_number(cells[feature_idx[k]], row, feature_names[k]));
  }

  const Eigen::Index n = static_cast<Eigen::Index>(labels.size());
  const Eigen::Index d = static_cast<Eigen::Index>(feature_idx.size());
  if (n < 2) throw ValidationError("dataset must contain at least 2 records, got " + std::to_string(n));

  Eigen::MatrixXd X(n, d);
  Eigen::VectorXd y(n), p(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = labels[static_cast<std::size_t>(i)];
    p[i] = scores[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d; ++j)
      X(i, j) = feats[static_cast<std::size_t>(i * d + j)];
  }
  return AuditDataset(std::move(X), std::move(y), std::move(p), std::move(feature_names));
}

// 17 significant digits round-trip doubles exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_dataset(std::ostream& out, const AuditDataset& d, const CsvSchema& schema = {}) {
  out << schema.label_column << ',' << schema.score_column;
  for (const auto& name : d.feature_names()) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    out << static_cast<int>(d.labels()[i]) << ',' << format_double(d.scores()[i]);
    for (Eigen::Index j = 0; j < d.dim(); ++j) out << ',' << format_double(d.features()(i, j));
    out << '\n';
  }
}

// Columns get sample mean 0 and sample (n-1) standard deviation 1.
// Zero-variance columns become all-zeros so constant attributes don't abort
// an audit. Labels and scores are untouched.
inline AuditDataset standardize_features(const AuditDataset& d) {
  Eigen::MatrixXd X = d.features();
  const double n = static_cast<double>(X.rows());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).mean();
    X.col(j).array() -= mean;
    const double sd = std::sqrt(X.col(j).squaredNorm() / (n - 1.0));
    if (sd > 0.0)
      X.col(j) /= sd;
    else
      X.col(j).setZero();
  }
  return AuditDataset(std::move(X), d.labels(), d.scores(), d.feature_names());
}

}  // namespace klce
