#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace beeps
{
    /// Exact non-negative rational with 64-bit parts, always kept in lowest terms.
    ///
    /// Used for transition probabilities and error bounds. Arithmetic that would
    /// overflow 64 bits throws std::overflow_error instead of rounding.
    class Rational
    {
    public:
        constexpr Rational() noexcept = default;
        Rational(std::uint64_t numerator, std::uint64_t denominator);

        static Rational parse(std::string_view text);
        static constexpr Rational zero() noexcept { return Rational{}; }
        static Rational one() { return Rational{1, 1}; }

        std::uint64_t num() const noexcept { return num_; }
        std::uint64_t den() const noexcept { return den_; }

        bool is_zero() const noexcept { return num_ == 0; }
        bool is_one() const noexcept { return num_ == den_; }
        double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }
        std::string to_string() const;

        /// Smallest integer >= value.
        std::uint64_t ceil() const noexcept { return num_ / den_ + (num_ % den_ != 0 ? 1 : 0); }
        Rational reciprocal() const;

        friend Rational operator+(const Rational &a, const Rational &b);
        friend Rational operator-(const Rational &a, const Rational &b);
        friend Rational operator*(const Rational &a, const Rational &b);
        friend bool operator==(const Rational &a, const Rational &b) noexcept = default;
        friend std::strong_ordering operator<=>(const Rational &a, const Rational &b) noexcept;

        Rational &operator+=(const Rational &o) { return *this = *this + o; }

    private:
        std::uint64_t num_ = 0;
        std::uint64_t den_ = 1;
    };

    using Probability = Rational;

    std::uint64_t lcm_checked(std::uint64_t a, std::uint64_t b);
}
