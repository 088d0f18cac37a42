#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>
#include <string_view>

namespace agentgraph {

// Exact arithmetic for everything money-like: per-token rates, request costs,
// expected-cost models. Doubles would drift on sums of thousands of messages;
// cpp_rational keeps every comparison exact.
using Rational = boost::multiprecision::cpp_rational;

// Accepts "3", "-7", "3/4", "-3/4", "1.25", ".5", "2.". Rejects everything
// else (including zero denominators) with Errc::parse.
Rational parse_rational(std::string_view text);

// Canonical form: "n" when the denominator is 1, otherwise "n/d" with d > 0
// and gcd(|n|, d) == 1. parse_rational(rational_str(x)) == x.
std::string rational_str(const Rational& value);

// Fixed-point rendering with the given number of fraction digits, rounding
// half away from zero (so 5.045 -> "5.05" and -5.045 -> "-5.05").
std::string format_decimal(const Rational& value, int fraction_digits);

} // namespace agentgraph
