#include "beeps/rational.hpp"

#include <charconv>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace beeps
{
    namespace
    {
        using u128 = unsigned __int128;

        std::uint64_t narrow(u128 v)
        {
            if (v > std::numeric_limits<std::uint64_t>::max())
            {
                throw std::overflow_error("rational arithmetic overflow");
            }
            return static_cast<std::uint64_t>(v);
        }

        Rational reduce128(u128 num, u128 den)
        {
            // Reduce in 128 bits before narrowing so intermediate products survive.
            u128 a = num, b = den;
            while (b != 0)
            {
                u128 t = a % b;
                a = b;
                b = t;
            }
            if (a == 0)
            {
                return Rational{};
            }
            return Rational{narrow(num / a), narrow(den / a)};
        }

        std::uint64_t parse_u64(std::string_view s, std::string_view whole)
        {
            std::uint64_t v = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
            {
                throw std::invalid_argument("not a rational: '" + std::string(whole) + "'");
            }
            return v;
        }
    }

    Rational::Rational(std::uint64_t numerator, std::uint64_t denominator)
    {
        if (denominator == 0)
        {
            throw std::invalid_argument("rational with zero denominator");
        }
        std::uint64_t g = std::gcd(numerator, denominator);
        if (g == 0)
        {
            g = 1;
        }
        num_ = numerator / g;
        den_ = denominator / g;
        if (num_ == 0)
        {
            den_ = 1;
        }
    }

    Rational Rational::parse(std::string_view text)
    {
        while (!text.empty() && text.front() == ' ')
        {
            text.remove_prefix(1);
        }
        while (!text.empty() && text.back() == ' ')
        {
            text.remove_suffix(1);
        }
        if (auto slash = text.find('/'); slash != std::string_view::npos)
        {
            return Rational{parse_u64(text.substr(0, slash), text), parse_u64(text.substr(slash + 1), text)};
        }
        if (auto dot = text.find('.'); dot != std::string_view::npos)
        {
            std::string_view int_part = text.substr(0, dot);
            std::string_view frac_part = text.substr(dot + 1);
            if (frac_part.size() > 18)
            {
                throw std::invalid_argument("too many decimal digits: '" + std::string(text) + "'");
            }
            std::uint64_t scale = 1;
            for (std::size_t i = 0; i < frac_part.size(); ++i)
            {
                scale *= 10;
            }
            std::uint64_t ip = int_part.empty() ? 0 : parse_u64(int_part, text);
            std::uint64_t fp = frac_part.empty() ? 0 : parse_u64(frac_part, text);
            return reduce128(static_cast<u128>(ip) * scale + fp, scale);
        }
        return Rational{parse_u64(text, text), 1};
    }

    std::string Rational::to_string() const
    {
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

    Rational Rational::reciprocal() const
    {
        if (num_ == 0)
        {
            throw std::domain_error("reciprocal of zero");
        }
        return Rational{den_, num_};
    }

    Rational operator+(const Rational &a, const Rational &b)
    {
        return reduce128(static_cast<u128>(a.num_) * b.den_ + static_cast<u128>(b.num_) * a.den_,
                         static_cast<u128>(a.den_) * b.den_);
    }

    Rational operator-(const Rational &a, const Rational &b)
    {
        u128 lhs = static_cast<u128>(a.num_) * b.den_;
        u128 rhs = static_cast<u128>(b.num_) * a.den_;
        if (rhs > lhs)
        {
            throw std::domain_error("negative rational");
        }
        return reduce128(lhs - rhs, static_cast<u128>(a.den_) * b.den_);
    }

    Rational operator*(const Rational &a, const Rational &b)
    {
        return reduce128(static_cast<u128>(a.num_) * b.num_, static_cast<u128>(a.den_) * b.den_);
    }

    std::strong_ordering operator<=>(const Rational &a, const Rational &b) noexcept
    {
        return static_cast<u128>(a.num_) * b.den_ <=> static_cast<u128>(b.num_) * a.den_;
    }

    std::uint64_t lcm_checked(std::uint64_t a, std::uint64_t b)
    {
        std::uint64_t g = std::gcd(a, b);
        return narrow(static_cast<u128>(a / g) * b);
    }
}
