#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "civitas/common.hpp"

namespace civitas {

// One line of the run trace: time, kind, subject, then free-form fields.
// Serialized tab separated with LF endings; times carry 9 significant digits.
struct LogRecord {
  double time = 0.0;
  std::string kind;
  std::string subject;
  std::vector<std::string> fields;
};

class EventLog {
 public:
  void add(double time, std::string kind, std::string subject, std::vector<std::string> fields = {}) {
    records_.push_back(LogRecord{time, std::move(kind), std::move(subject), std::move(fields)});
  }

  const std::vector<LogRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  void clear() { records_.clear(); }

  std::size_t count(std::string_view kind) const {
    std::size_t n = 0;
    for (const auto& r : records_)
      if (r.kind == kind) ++n;
    return n;
  }

  void write(std::ostream& os) const {
    for (const auto& r : records_) {
      os << fmt9(r.time) << '\t' << r.kind << '\t' << r.subject;
      for (const auto& f : r.fields) os << '\t' << f;
      os << '\n';
    }
  }

 private:
  std::vector<LogRecord> records_;
};

}  // namespace civitas
