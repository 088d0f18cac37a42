#include "agentgraph/rational.hpp"

#include "agentgraph/errors.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <cstddef>
#include <string>

namespace agentgraph {

namespace {

using BigInt = boost::multiprecision::cpp_int;

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

BigInt pow10(std::size_t n) {
    BigInt r = 1;
    for (std::size_t i = 0; i < n; ++i) r *= 10;
    return r;
}

} // namespace

Rational parse_rational(std::string_view text) {
    std::string_view s = text;
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (s.empty()) fail(Errc::parse, "empty rational literal");

    bool negative = false;
    if (s.front() == '+' || s.front() == '-') {
        negative = s.front() == '-';
        s.remove_prefix(1);
    }
    if (s.empty()) fail(Errc::parse, "sign without digits: '" + std::string(text) + "'");

    Rational magnitude;
    if (auto slash = s.find('/'); slash != std::string_view::npos) {
        std::string_view num = s.substr(0, slash);
        std::string_view den = s.substr(slash + 1);
        if (!all_digits(num) || !all_digits(den))
            fail(Errc::parse, "bad rational literal: '" + std::string(text) + "'");
        BigInt d{std::string(den)};
        if (d == 0) fail(Errc::parse, "zero denominator: '" + std::string(text) + "'");
        magnitude = Rational(BigInt{std::string(num)}, d);
    } else if (auto dot = s.find('.'); dot != std::string_view::npos) {
        std::string_view whole = s.substr(0, dot);
        std::string_view frac = s.substr(dot + 1);
        if (whole.empty() && frac.empty())
            fail(Errc::parse, "bad rational literal: '" + std::string(text) + "'");
        if ((!whole.empty() && !all_digits(whole)) || (!frac.empty() && !all_digits(frac)))
            fail(Errc::parse, "bad rational literal: '" + std::string(text) + "'");
        BigInt scaled = whole.empty() ? BigInt(0) : BigInt{std::string(whole)};
        BigInt denom = pow10(frac.size());
        scaled *= denom;
        if (!frac.empty()) scaled += BigInt{std::string(frac)};
        magnitude = Rational(scaled, denom);
    } else {
        if (!all_digits(s)) fail(Errc::parse, "bad rational literal: '" + std::string(text) + "'");
        magnitude = Rational(BigInt{std::string(s)});
    }

    return negative ? Rational(-magnitude) : magnitude;
}

std::string rational_str(const Rational& value) {
    BigInt num = boost::multiprecision::numerator(value);
    BigInt den = boost::multiprecision::denominator(value);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

std::string format_decimal(const Rational& value, int fraction_digits) {
    if (fraction_digits < 0) fail(Errc::domain, "negative fraction digits");
    BigInt num = boost::multiprecision::numerator(value);
    BigInt den = boost::multiprecision::denominator(value);
    bool negative = num < 0;
    if (negative) num = -num;

    BigInt scale = pow10(static_cast<std::size_t>(fraction_digits));
    // Round half away from zero: floor((|n| * scale * 2 + d) / (2 d)).
    BigInt scaled = (num * scale * 2 + den) / (den * 2);

    BigInt whole = scaled / scale;
    BigInt frac = scaled % scale;

    std::string out = whole.str();
    if (fraction_digits > 0) {
        std::string digits = frac.str();
        digits.insert(digits.begin(), static_cast<std::size_t>(fraction_digits) - digits.size(), '0');
        out += "." + digits;
    }
    if (negative && scaled != 0) out.insert(out.begin(), '-');
    return out;
}

} // namespace agentgraph
