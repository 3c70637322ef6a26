#include "beeps/election.hpp"

#include <gmpxx.h>

#include <stdexcept>

namespace beeps
{
    ElectionParams ElectionParams::make(Rational epsilon, std::uint64_t q, std::uint32_t n_lower_bound)
    {
        if (epsilon.is_zero() || Rational{1, 2} < epsilon)
        {
            throw std::invalid_argument("epsilon must lie in (0, 1/2], got " + epsilon.to_string());
        }
        if (q < 2)
        {
            throw std::invalid_argument("q must be at least 2");
        }
        if (n_lower_bound < 1)
        {
            throw std::invalid_argument("n lower bound must be at least 1");
        }
        ElectionParams p;
        p.epsilon = epsilon;
        p.q = q;
        p.n_lower_bound = n_lower_bound;
        p.q_hat = std::min(q, epsilon.reciprocal().ceil());
        return p;
    }

    std::uint32_t fixed_error_coin_rounds(const Rational &epsilon)
    {
        if (epsilon.is_zero())
        {
            throw std::invalid_argument("epsilon must be positive");
        }
        const unsigned __int128 target = static_cast<unsigned __int128>(epsilon.den()) * 2;
        std::uint32_t l = 0;
        while ((static_cast<unsigned __int128>(epsilon.num()) << l) < target)
        {
            ++l;
        }
        return l;
    }

    std::uint64_t state_optimal_rounds(const ElectionParams &params, std::uint32_t c)
    {
        if (c < 1)
        {
            throw std::invalid_argument("c must be at least 1");
        }
        mpz_class num_c;
        mpz_class den_c;
        mpz_ui_pow_ui(num_c.get_mpz_t(), params.epsilon.num(), c);
        mpz_ui_pow_ui(den_c.get_mpz_t(), params.epsilon.den(), c);
        mpz_class step;
        mpz_ui_pow_ui(step.get_mpz_t(), params.q_hat, params.n_lower_bound);
        mpz_class lhs = step * num_c;
        std::uint64_t d = 1;
        while (lhs < den_c)
        {
            lhs *= step;
            ++d;
        }
        return d;
    }

    namespace
    {
        const Probability half{1, 2};

        SubDist coin_if(bool flip, std::uint64_t heads, std::uint64_t tails)
        {
            return flip ? SubDist::bernoulli(heads, tails, half) : SubDist::point(tails);
        }

        class StateOptimal final : public TerminationSubroutine
        {
        public:
            StateOptimal(std::uint64_t delta, std::uint64_t q_hat)
                : delta_(delta), index_(0, bits_for(delta - 1)), heard_(index_.width(), 1),
                  beep_(index_.width() + 1, 1), beep_p_(Probability::one() - Probability{1, q_hat})
            {
            }

            Routine routine() const override { return Routine::state_optimal; }
            std::string name() const override { return "state-optimal"; }
            unsigned width() const override { return index_.width() + 2; }
            std::optional<std::uint64_t> fixed_length() const override { return delta_; }

            SubDist enter(SubArgs) const override { return draw(LocalState{}); }

            Action act(SubArgs, std::uint64_t state) const override
            {
                return beep_.get(LocalState{state}) != 0 ? Action::beep : Action::listen;
            }

            SubStep step(SubArgs, std::uint64_t state, Channel c) const override
            {
                LocalState s{state};
                const bool heard = heard_.get(s) != 0 || c == Channel::beep;
                const std::uint64_t i = index_.get(s) + 1;
                if (i == delta_)
                {
                    return {!heard, {}};
                }
                index_.set(s, i);
                heard_.set(s, heard ? 1 : 0);
                return {std::nullopt, draw(s)};
            }

            std::uint64_t public_enter() const override { return 0; }

            PublicStep public_step(std::uint64_t phase, Channel c) const override
            {
                // phase = 2·index + heard
                const bool heard = (phase & 1) != 0 || c == Channel::beep;
                const std::uint64_t i = (phase >> 1) + 1;
                if (i == delta_)
                {
                    return {!heard, 0};
                }
                return {std::nullopt, (i << 1) | (heard ? 1 : 0)};
            }

        private:
            SubDist draw(LocalState s) const
            {
                LocalState b = s;
                beep_.set(b, 1);
                beep_.set(s, 0);
                return SubDist::bernoulli(b.word, s.word, beep_p_);
            }

            std::uint64_t delta_;
            Field index_;
            Field heard_;
            Field beep_;
            Probability beep_p_;
        };

        class FixedError final : public TerminationSubroutine
        {
        public:
            explicit FixedError(std::uint32_t coin_rounds)
                : l_(coin_rounds), round_(0, bits_for(coin_rounds + 1)), solo_(round_.width(), 1),
                  coin_(round_.width() + 1, 1)
            {
            }

            Routine routine() const override { return Routine::fixed_error; }
            std::string name() const override { return "fixed-error"; }
            unsigned width() const override { return round_.width() + 2; }
            std::optional<std::uint64_t> fixed_length() const override { return l_ + 2; }

            SubDist enter(SubArgs) const override { return SubDist::point(0); }

            Action act(SubArgs a, std::uint64_t state) const override
            {
                LocalState s{state};
                const std::uint64_t j = round_.get(s);
                bool beep = false;
                if (j == 0)
                {
                    beep = a.ko;
                }
                else if (j <= l_)
                {
                    beep = a.active && coin_.get(s) != 0;
                }
                else
                {
                    beep = a.active && solo_.get(s) == 0;
                }
                return beep ? Action::beep : Action::listen;
            }

            SubStep step(SubArgs a, std::uint64_t state, Channel c) const override
            {
                LocalState s{state};
                const std::uint64_t j = round_.get(s);
                if (j == 0)
                {
                    if (c == Channel::silent)
                    {
                        return {false, {}};
                    }
                    solo_.set(s, a.active ? 1 : 0);
                }
                else if (j <= l_)
                {
                    if (a.active && coin_.get(s) == 0 && c == Channel::beep)
                    {
                        solo_.set(s, 0);
                    }
                }
                else
                {
                    return {c == Channel::silent, {}};
                }
                round_.set(s, j + 1);
                coin_.set(s, 0);
                LocalState heads = s;
                coin_.set(heads, 1);
                return {std::nullopt, coin_if(a.active && j + 1 <= l_, heads.word, s.word)};
            }

            std::uint64_t public_enter() const override { return 0; }

            PublicStep public_step(std::uint64_t j, Channel c) const override
            {
                if (j == 0 && c == Channel::silent)
                {
                    return {false, 0};
                }
                if (j == l_ + 1)
                {
                    return {c == Channel::silent, 0};
                }
                return {std::nullopt, j + 1};
            }

        private:
            std::uint32_t l_;
            Field round_;
            Field solo_;
            Field coin_;
        };

        class ConstantState final : public TerminationSubroutine
        {
        public:
            enum Phase : std::uint64_t
            {
                ko_round = 0,
                odd = 1,
                even = 2,
                last = 3,
            };

            explicit ConstantState(std::uint32_t bound)
                : bound_(bound), phase_(0, 2), solo_(2, 1), coin_(3, 1), attack_(4, 1), count_(5, bits_for(bound))
            {
            }

            Routine routine() const override { return Routine::constant_state; }
            std::string name() const override { return "constant-state"; }
            unsigned width() const override { return 5 + count_.width(); }

            SubDist enter(SubArgs) const override { return SubDist::point(0); }

            Action act(SubArgs a, std::uint64_t state) const override
            {
                LocalState s{state};
                bool beep = false;
                switch (phase_.get(s))
                {
                case ko_round:
                    beep = a.ko;
                    break;
                case odd:
                    beep = a.active && coin_.get(s) != 0;
                    break;
                case even:
                    beep = attack_.get(s) != 0 && coin_.get(s) != 0;
                    break;
                default:
                    beep = a.active && solo_.get(s) == 0;
                    break;
                }
                return beep ? Action::beep : Action::listen;
            }

            SubStep step(SubArgs a, std::uint64_t state, Channel c) const override
            {
                LocalState s{state};
                const bool heard = c == Channel::beep;
                switch (phase_.get(s))
                {
                case ko_round:
                    if (!heard)
                    {
                        return {false, {}};
                    }
                    solo_.set(s, a.active ? 1 : 0);
                    attack_.set(s, 1);
                    count_.set(s, 0);
                    return {std::nullopt, odd_round(a, s)};
                case odd:
                    if (a.active && coin_.get(s) == 0 && heard)
                    {
                        solo_.set(s, 0);
                    }
                    phase_.set(s, even);
                    return {std::nullopt, flip(attack_.get(s) != 0, s)};
                case even:
                    if (!heard)
                    {
                        const std::uint64_t count = count_.get(s) + 1;
                        if (count > bound_)
                        {
                            phase_.set(s, last);
                            coin_.set(s, 0);
                            attack_.set(s, 0);
                            count_.set(s, 0);
                            return {std::nullopt, SubDist::point(s.word)};
                        }
                        count_.set(s, count);
                        attack_.set(s, 1);
                    }
                    else if (attack_.get(s) != 0 && coin_.get(s) == 0)
                    {
                        attack_.set(s, 0);
                    }
                    return {std::nullopt, odd_round(a, s)};
                default:
                    return {!heard, {}};
                }
            }

            std::uint64_t public_enter() const override { return 0; }

            PublicStep public_step(std::uint64_t p, Channel c) const override
            {
                // p = 4·count + phase
                const std::uint64_t phase = p & 3;
                const std::uint64_t count = p >> 2;
                const bool heard = c == Channel::beep;
                switch (phase)
                {
                case ko_round:
                    return heard ? PublicStep{std::nullopt, odd} : PublicStep{false, 0};
                case odd:
                    return {std::nullopt, (count << 2) | even};
                case even:
                    if (heard)
                    {
                        return {std::nullopt, (count << 2) | odd};
                    }
                    if (count + 1 > bound_)
                    {
                        return {std::nullopt, last};
                    }
                    return {std::nullopt, ((count + 1) << 2) | odd};
                default:
                    return {!heard, 0};
                }
            }

        private:
            SubDist odd_round(SubArgs a, LocalState s) const
            {
                phase_.set(s, odd);
                return flip(a.active, s);
            }

            SubDist flip(bool flips, LocalState s) const
            {
                coin_.set(s, 0);
                LocalState heads = s;
                coin_.set(heads, 1);
                return coin_if(flips, heads.word, s.word);
            }

            std::uint32_t bound_;
            Field phase_;
            Field solo_;
            Field coin_;
            Field attack_;
            Field count_;
        };

        class DoubleSafe final : public TerminationSubroutine
        {
        public:
            DoubleSafe(SubroutinePtr first, SubroutinePtr second)
                : first_(std::move(first)), second_(std::move(second)), which_(0, 1), out1_(1, 1),
                  inner_(2, std::max(first_->width(), second_->width()))
            {
            }

            Routine routine() const override { return Routine::double_safe; }
            std::string name() const override { return "double-safe"; }
            unsigned width() const override { return 2 + inner_.width(); }

            SubDist enter(SubArgs a) const override
            {
                return first_->enter(a).map([&](std::uint64_t v) { return wrap(0, 0, v); });
            }

            Action act(SubArgs a, std::uint64_t state) const override
            {
                LocalState s{state};
                return (which_.get(s) == 0 ? *first_ : *second_).act(a, inner_.get(s));
            }

            SubStep step(SubArgs a, std::uint64_t state, Channel c) const override
            {
                LocalState s{state};
                const std::uint64_t which = which_.get(s);
                const std::uint64_t out1 = out1_.get(s);
                if (which == 0)
                {
                    SubStep r = first_->step(a, inner_.get(s), c);
                    if (r.result)
                    {
                        const std::uint64_t o = *r.result ? 1 : 0;
                        return {std::nullopt,
                                second_->enter(a).map([&](std::uint64_t v) { return wrap(1, o, v); })};
                    }
                    return {std::nullopt, r.next.map([&](std::uint64_t v) { return wrap(0, 0, v); })};
                }
                SubStep r = second_->step(a, inner_.get(s), c);
                if (r.result)
                {
                    return {out1 != 0 && *r.result, {}};
                }
                return {std::nullopt, r.next.map([&](std::uint64_t v) { return wrap(1, out1, v); })};
            }

            // Public phase: bit 0 = which, bit 1 = out1, rest = constituent phase.
            std::uint64_t public_enter() const override { return first_->public_enter() << 2; }

            PublicStep public_step(std::uint64_t p, Channel c) const override
            {
                const std::uint64_t which = p & 1;
                const std::uint64_t out1 = (p >> 1) & 1;
                const std::uint64_t inner = p >> 2;
                if (which == 0)
                {
                    PublicStep r = first_->public_step(inner, c);
                    if (r.result)
                    {
                        return {std::nullopt, (second_->public_enter() << 2) | ((*r.result ? 1u : 0u) << 1) | 1};
                    }
                    return {std::nullopt, r.next << 2};
                }
                PublicStep r = second_->public_step(inner, c);
                if (r.result)
                {
                    return {out1 != 0 && *r.result, 0};
                }
                return {std::nullopt, (r.next << 2) | (out1 << 1) | 1};
            }

        private:
            std::uint64_t wrap(std::uint64_t which, std::uint64_t out1, std::uint64_t inner) const
            {
                LocalState s;
                which_.set(s, which);
                out1_.set(s, out1);
                inner_.set(s, inner);
                return s.word;
            }

            SubroutinePtr first_;
            SubroutinePtr second_;
            Field which_;
            Field out1_;
            Field inner_;
        };
    }

    SubroutinePtr subroutine_state_optimal(const ElectionParams &params, std::uint32_t c)
    {
        return std::make_shared<StateOptimal>(state_optimal_rounds(params, c), params.q_hat);
    }

    SubroutinePtr subroutine_fixed_error(const ElectionParams &params)
    {
        return std::make_shared<FixedError>(fixed_error_coin_rounds(params.epsilon));
    }

    SubroutinePtr subroutine_constant_state(std::uint32_t count_bound)
    {
        if (count_bound < 1)
        {
            throw std::invalid_argument("count bound must be at least 1");
        }
        return std::make_shared<ConstantState>(count_bound);
    }

    SubroutinePtr subroutine_double_safe(const ElectionParams &params, std::uint32_t count_bound)
    {
        return std::make_shared<DoubleSafe>(subroutine_fixed_error(params), subroutine_constant_state(count_bound));
    }

    bool is_subroutine_name(std::string_view name) noexcept
    {
        return name == "state-optimal" || name == "fixed-error" || name == "constant-state" || name == "double-safe";
    }

    SubroutinePtr subroutine_by_name(std::string_view name, const ElectionParams &params,
                                     const SubroutineOptions &options)
    {
        if (name == "state-optimal")
        {
            return subroutine_state_optimal(params, options.c);
        }
        if (name == "fixed-error")
        {
            return subroutine_fixed_error(params);
        }
        if (name == "constant-state")
        {
            return subroutine_constant_state(options.count_bound);
        }
        if (name == "double-safe")
        {
            return subroutine_double_safe(params, options.count_bound);
        }
        throw std::invalid_argument("unknown subroutine '" + std::string(name) + "'");
    }
}
