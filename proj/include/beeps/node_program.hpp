#pragma once

#include "beeps/rational.hpp"

#include <array>
#include <cassert>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace beeps
{
    enum class Action : std::uint8_t
    {
        listen = 0,
        beep = 1,
    };

    /// What a round sounded like: ⊥ (silent) or ⊤ (at least one beep).
    enum class Channel : std::uint8_t
    {
        silent = 0,
        beep = 1,
    };

    enum class FinalLabel : std::uint8_t
    {
        leader,
        follower,
        alone,
        crowd,
        accept,
        reject,
    };

    std::string_view to_string(FinalLabel label) noexcept;
    std::optional<FinalLabel> parse_final_label(std::string_view text) noexcept;

    /// A node's complete local memory, packed into one machine word.
    struct LocalState
    {
        std::uint64_t word = 0;
        friend bool operator==(LocalState, LocalState) noexcept = default;
    };

    /// A named bit range inside a LocalState.
    class Field
    {
    public:
        constexpr Field() noexcept = default;
        constexpr Field(unsigned offset, unsigned width) noexcept : offset_(offset), width_(width) {}

        constexpr std::uint64_t get(LocalState s) const noexcept { return (s.word >> offset_) & mask(); }
        constexpr void set(LocalState &s, std::uint64_t v) const noexcept
        {
            s.word = (s.word & ~(mask() << offset_)) | ((v & mask()) << offset_);
        }
        constexpr void clear(LocalState &s) const noexcept { set(s, 0); }
        constexpr std::uint64_t mask() const noexcept { return width_ >= 64 ? ~0ULL : ((1ULL << width_) - 1); }
        constexpr unsigned offset() const noexcept { return offset_; }
        constexpr unsigned width() const noexcept { return width_; }

    private:
        unsigned offset_ = 0;
        unsigned width_ = 0;
    };

    /// Bits needed to store values in [0, max_value].
    unsigned bits_for(std::uint64_t max_value) noexcept;

    /// The declared local-variable space of a NodeProgram.
    class VariableLayout
    {
    public:
        struct Variable
        {
            std::string name;
            Field field;
        };

        Field add(std::string name, unsigned width);
        /// Reserves a contiguous block that a component lays out itself.
        Field reserve(std::string name, unsigned width) { return add(std::move(name), width); }

        const Variable *find(std::string_view name) const noexcept;
        const std::vector<Variable> &variables() const noexcept { return vars_; }
        unsigned width() const noexcept { return used_; }

    private:
        std::vector<Variable> vars_;
        unsigned used_ = 0;
    };

    /// Probability distribution with a tiny fixed capacity; entries keep insertion order.
    template <class T, std::size_t Cap = 8>
    class SmallDist
    {
    public:
        struct Entry
        {
            T value;
            Probability p;
        };

        static SmallDist point(T v)
        {
            SmallDist d;
            d.push(v, Probability::one());
            return d;
        }

        /// Two-way split: `first` with probability p, `second` with 1-p.
        static SmallDist bernoulli(T first, T second, Probability p)
        {
            SmallDist d;
            if (p.is_zero() || first == second)
            {
                d.push(p.is_zero() ? second : first, Probability::one());
            }
            else if (p.is_one())
            {
                d.push(first, Probability::one());
            }
            else
            {
                d.push(first, p);
                d.push(second, Probability::one() - p);
            }
            return d;
        }

        void push(T v, Probability p)
        {
            if (size_ == Cap)
            {
                throw std::length_error("SmallDist capacity exceeded");
            }
            items_[size_++] = Entry{v, p};
        }

        template <class F>
        auto map(F &&f) const
        {
            SmallDist<decltype(f(std::declval<T>())), Cap> out;
            for (std::size_t i = 0; i < size_; ++i)
            {
                out.push(f(items_[i].value), items_[i].p);
            }
            return out;
        }

        std::size_t size() const noexcept { return size_; }
        bool empty() const noexcept { return size_ == 0; }
        const Entry &operator[](std::size_t i) const noexcept { return items_[i]; }
        const Entry *begin() const noexcept { return items_.data(); }
        const Entry *end() const noexcept { return items_.data() + size_; }

    private:
        std::array<Entry, Cap> items_{};
        std::size_t size_ = 0;
    };

    enum class EventKind : std::uint8_t
    {
        knockout,        ///< active node heard a beep while listening in the knockout loop
        call_begin,      ///< a = active, b = ko
        call_end,        ///< a = returned bit
        final_entry,     ///< a = FinalLabel
        election_end,    ///< counter sub-election finished; a = won
        frame_sent,      ///< coordinator finished announcing; a = opcode, b = counter
        frame_decoded,   ///< a = opcode, b = counter
        op_done,         ///< a = opcode, b = counter
        frame_error,
    };

    enum class Routine : std::uint8_t
    {
        none,
        state_optimal,
        fixed_error,
        constant_state,
        double_safe,
        election,
        counter,
    };

    std::string_view to_string(EventKind kind) noexcept;
    std::string_view to_string(Routine routine) noexcept;

    struct NodeEvent
    {
        EventKind kind{};
        Routine routine = Routine::none;
        std::uint8_t a = 0;
        std::uint8_t b = 0;
        friend bool operator==(const NodeEvent &, const NodeEvent &) noexcept = default;
    };

    class EventList
    {
    public:
        void push(NodeEvent e)
        {
            if (size_ == items_.size())
            {
                throw std::length_error("EventList capacity exceeded");
            }
            items_[size_++] = e;
        }
        void append(const EventList &other)
        {
            for (const auto &e : other)
            {
                push(e);
            }
        }
        std::size_t size() const noexcept { return size_; }
        bool empty() const noexcept { return size_ == 0; }
        const NodeEvent *begin() const noexcept { return items_.data(); }
        const NodeEvent *end() const noexcept { return items_.data() + size_; }

    private:
        std::array<NodeEvent, 6> items_{};
        std::size_t size_ = 0;
    };

    /// Outcome of one node's update after a round. Events depend only on
    /// (state, channel); randomness only selects among `next`.
    struct Transition
    {
        SmallDist<LocalState> next;
        EventList events;
    };

    /// Bounded-state procedural node behaviour.
    ///
    /// act() and step() see only the local state and the channel bit, never a
    /// round number or node identity, so every program denotes a BeepMachine.
    class NodeProgram
    {
    public:
        virtual ~NodeProgram() = default;

        virtual std::string name() const = 0;
        virtual const VariableLayout &layout() const = 0;
        virtual LocalState start() const = 0;
        virtual Action act(LocalState s) const = 0;
        virtual Transition step(LocalState s, Channel c) const = 0;
        virtual std::optional<FinalLabel> label(LocalState s) const = 0;
        virtual std::vector<FinalLabel> declared_labels() const = 0;

        /// Events attributed to round 0 (e.g. a call that begins with the execution).
        virtual EventList start_events(LocalState) const { return {}; }
    };

    using ProgramPtr = std::shared_ptr<const NodeProgram>;

    /// Picks a branch using one 64-bit random word: the word is scaled onto
    /// [0, lcm of denominators) and compared against cumulative numerators.
    /// Every call consumes exactly one word, whatever the branch count.
    std::size_t sample_branch(const SmallDist<LocalState> &dist, std::uint64_t word);
}
