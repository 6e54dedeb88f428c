#pragma once

#include <string>

#include "civitas/common.hpp"

namespace civitas {

// Semantic levels of the traffic hierarchy, bottom to top.
enum class Level : int { Itu = 0, Ztcu = 1, Atcu = 2, Tcu = 3 };

inline const char* to_string(Level l) {
  switch (l) {
    case Level::Itu: return "ITU";
    case Level::Ztcu: return "ZTCU";
    case Level::Atcu: return "ATCU";
    case Level::Tcu: return "TCU";
  }
  return "?";
}

// Bottom-up report: how far a level misses what its parent asked for.
struct ViolationMsg {
  Level source = Level::Itu;
  Level target = Level::Ztcu;
  std::string from;  // reporting module id
  std::string to;    // parent module id
  std::string quantity;
  double shortfall = 0.0;  // in the quantity's unit, always > 0
  double occurred_at = 0.0;

  ViolationMsg() = default;
  ViolationMsg(Level src, std::string from_id, std::string to_id, std::string qty, double amount, double at)
      : source(src),
        target(static_cast<Level>(static_cast<int>(src) + 1)),
        from(std::move(from_id)),
        to(std::move(to_id)),
        quantity(std::move(qty)),
        shortfall(amount),
        occurred_at(at) {
    validate();
  }

  void validate() const {
    if (static_cast<int>(target) != static_cast<int>(source) + 1 || source == Level::Tcu)
      throw std::logic_error("violation must travel exactly one level up");
    if (!(shortfall > 0.0)) throw DomainError("violation shortfall must be positive");
  }
};

}  // namespace civitas
