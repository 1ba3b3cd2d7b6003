#pragma once

#include <cmath>
#include <string>

#include "coc/rng.hpp"
#include "coc/value.hpp"

// Random value trees over the full value domain, for codec round-trip
// property tests.
namespace cocgen {

inline coc::Value random_scalar(coc::SplitMix64& rng) {
  switch (rng.range(0, 5)) {
    case 0:
      return coc::Value::none();
    case 1:
      return coc::Value::boolean(rng.chance(0.5));
    case 2: {
      // occasionally far beyond 64 bits
      if (rng.chance(0.2)) {
        mpz_class big(1);
        mpz_class base(rng.range(2, 9));
        mpz_pow_ui(big.get_mpz_t(), base.get_mpz_t(), rng.range(30, 90));
        return coc::Value::integer(rng.chance(0.5) ? big : mpz_class(-big));
      }
      return coc::Value::integer(static_cast<long>(rng.range(-100000, 100000)));
    }
    case 3: {
      if (rng.chance(0.1)) {
        switch (rng.range(0, 2)) {
          case 0:
            return coc::Value::floating(std::numeric_limits<double>::infinity());
          case 1:
            return coc::Value::floating(-std::numeric_limits<double>::infinity());
          default:
            return coc::Value::floating(std::numeric_limits<double>::quiet_NaN());
        }
      }
      double mantissa = static_cast<double>(rng.range(-999999, 999999));
      return coc::Value::floating(std::ldexp(mantissa, rng.range(-40, 40)));
    }
    case 4: {
      static const char* pool[] = {"",        "orange", "you don't say",
                                   "a\nb",    "tab\there", "back\\slash",
                                   "quote'q", "\x01ctl",   "émoji ✓"};
      return coc::Value::str(pool[rng.below(9)]);
    }
    default:
      return coc::Value::module(rng.chance(0.5) ? "numpy" : "collections");
  }
}

inline coc::Value random_dict_key(coc::SplitMix64& rng) {
  switch (rng.range(0, 3)) {
    case 0:
      return coc::Value::str("k" + std::to_string(rng.below(50)));
    case 1:
      return coc::Value::integer(static_cast<long>(rng.range(-50, 50)));
    case 2:
      return coc::Value::boolean(rng.chance(0.5));
    default:
      return coc::Value::tuple({coc::Value::integer(static_cast<long>(rng.range(0, 9))),
                                coc::Value::str("t" + std::to_string(rng.below(9)))});
  }
}

inline coc::Value random_value(coc::SplitMix64& rng, int depth) {
  if (depth <= 0 || rng.chance(0.45)) return random_scalar(rng);
  switch (rng.range(0, 2)) {
    case 0: {
      coc::Value::List items;
      int n = rng.range(0, 4);
      for (int i = 0; i < n; ++i) items.push_back(random_value(rng, depth - 1));
      return coc::Value::list(std::move(items));
    }
    case 1: {
      coc::Value::List items;
      int n = rng.range(0, 4);
      for (int i = 0; i < n; ++i) items.push_back(random_value(rng, depth - 1));
      return coc::Value::tuple(std::move(items));
    }
    default: {
      coc::Value::Dict entries;
      int n = rng.range(0, 4);
      for (int i = 0; i < n; ++i) {
        coc::Value key = random_dict_key(rng);
        bool dup = false;
        for (const auto& [k, v] : entries)
          if (coc::language_eq(k, key)) dup = true;
        if (!dup) entries.emplace_back(std::move(key), random_value(rng, depth - 1));
      }
      return coc::Value::dict(std::move(entries));
    }
  }
}

}  // namespace cocgen
