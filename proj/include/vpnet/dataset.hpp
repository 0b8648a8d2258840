#pragma once

#include "vpnet/core.hpp"

#include <algorithm>
#include <span>
#include <string>
#include <vector>

namespace vpnet {

/// Signals (one per row) with integer class labels and optional per-sample
/// numeric metadata columns.
struct LabeledDataset {
  Matrix signals;  // N x m
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::vector<std::string> meta_columns;
  Matrix meta;  // N x meta_columns.size(), or empty

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t signal_length() const noexcept { return static_cast<std::size_t>(signals.cols()); }
  bool empty() const noexcept { return labels.empty(); }

  void validate() const {
    if (static_cast<std::size_t>(signals.rows()) != labels.size())
      throw InvalidArgument("LabeledDataset: signal rows and label count differ");
    if (class_count < 1) throw InvalidArgument("LabeledDataset: class_count must be >= 1");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count)
        throw InvalidArgument("LabeledDataset: label " + std::to_string(labels[i]) + " of sample " +
                              std::to_string(i) + " outside [0, " + std::to_string(class_count) + ")");
    if (!signals.allFinite()) throw InvalidArgument("LabeledDataset: non-finite signal values");
    if (!meta_columns.empty() &&
        (meta.rows() != signals.rows() || meta.cols() != static_cast<Index>(meta_columns.size())))
      throw InvalidArgument("LabeledDataset: metadata shape mismatch");
  }

  std::vector<std::size_t> class_histogram() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
    return counts;
  }

  LabeledDataset subset(std::span<const std::size_t> rows) const {
    LabeledDataset out;
    out.class_count = class_count;
    out.meta_columns = meta_columns;
    out.signals.resize(static_cast<Index>(rows.size()), signals.cols());
    if (!meta_columns.empty()) out.meta.resize(static_cast<Index>(rows.size()), meta.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Index r = static_cast<Index>(rows[i]);
      out.signals.row(static_cast<Index>(i)) = signals.row(r);
      if (!meta_columns.empty()) out.meta.row(static_cast<Index>(i)) = meta.row(r);
      out.labels.push_back(labels.at(rows[i]));
    }
    return out;
  }

  Index meta_column(const std::string& name) const {
    auto it = std::find(meta_columns.begin(), meta_columns.end(), name);
    if (it == meta_columns.end()) throw InvalidArgument("LabeledDataset: no metadata column '" + name + "'");
    return static_cast<Index>(it - meta_columns.begin());
  }
};

}  // namespace vpnet
