#pragma once

#include "beeps/node_program.hpp"
#include "beeps/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace beeps
{
    /// Who runs what: one program per node plus per-node start states.
    class NetworkSpec
    {
    public:
        static NetworkSpec uniform(ProgramPtr program, std::uint32_t n);

        /// Adds a node running `program` from its default start state.
        NetworkSpec &add_node(ProgramPtr program);
        /// Adjusts one declared local variable of one node's start state.
        NetworkSpec &override_variable(std::uint32_t node, std::string_view variable, std::uint64_t value);

        std::uint32_t n() const noexcept { return static_cast<std::uint32_t>(programs_.size()); }
        const ProgramPtr &program(std::uint32_t node) const { return programs_.at(node); }
        LocalState start(std::uint32_t node) const { return starts_.at(node); }

    private:
        std::vector<ProgramPtr> programs_;
        std::vector<LocalState> starts_;
    };

    /// ⊤ iff at least one node beeps.
    Channel resolve_channel(std::span<const Action> actions);

    struct TraceEvent
    {
        std::uint64_t round = 0; ///< round whose update produced the event; 0 = before round 1
        std::uint32_t node = 0;
        NodeEvent event;
        friend bool operator==(const TraceEvent &, const TraceEvent &) noexcept = default;
    };

    enum class TraceDetail : std::uint8_t
    {
        summary, ///< outcome only
        events,  ///< + channel bits, beep counts and events
        full,    ///< + per-node action vectors
    };

    struct Trace
    {
        std::uint64_t seed = 0;
        std::uint32_t n = 0;
        bool terminated = false;
        std::uint64_t rounds_elapsed = 0;
        TraceDetail detail = TraceDetail::full;

        std::vector<Channel> channels;          ///< index r-1 holds round r
        std::vector<std::uint32_t> beep_counts; ///< index r-1 holds round r
        std::vector<Action> actions;            ///< row-major, n per round
        std::vector<TraceEvent> events;

        std::vector<std::optional<FinalLabel>> final_labels;
        std::vector<FinalLabel> declared_labels;

        std::span<const Action> round_actions(std::uint64_t round) const
        {
            return std::span<const Action>(actions).subspan((round - 1) * n, n);
        }
        bool declares(FinalLabel label) const;
        std::size_t count_label(FinalLabel label) const;
    };

    struct RoundView
    {
        std::uint64_t round;
        Channel channel;
        std::uint32_t beepers;
        std::span<const Action> actions;     ///< this round's actions; empty for round 0
        std::span<const TraceEvent> events;  ///< events produced by this round's updates
        std::span<const LocalState> states;  ///< post-update states, when requested
    };

    /// Online hook into an execution. Called for round 0 (start events) and for
    /// every round that produced events, or for all rounds when asked.
    class ExecutionObserver
    {
    public:
        virtual ~ExecutionObserver() = default;
        virtual bool wants_every_round() const { return false; }
        virtual bool wants_states() const { return false; }
        virtual void on_start(std::uint64_t /*seed*/, std::uint32_t /*n*/) {}
        virtual void on_round(const RoundView &view) = 0;
        virtual void on_finish(const Trace &) {}
    };

    struct ExecutionOptions
    {
        TraceDetail detail = TraceDetail::full;
        std::vector<ExecutionObserver *> observers;
    };

    inline constexpr std::uint64_t default_fast_cutoff = 100'000;
    inline constexpr std::uint64_t default_slow_cutoff = 10'000'000;

    class ProgramTable;

    /// Runs executions; keeps lazily compiled transition tables per program so
    /// repeated runs of the same programs are cheap. Not thread safe: use one
    /// Executor per worker.
    class Executor
    {
    public:
        Executor();
        ~Executor();
        Executor(Executor &&) noexcept;
        Executor &operator=(Executor &&) noexcept;

        Trace run(const NetworkSpec &spec, std::uint64_t seed, std::uint64_t round_cutoff,
                  const ExecutionOptions &options = {});

    private:
        ProgramTable &table_for(const ProgramPtr &program);
        struct CachedTable
        {
            ProgramPtr program; ///< held so the address key cannot be reused
            std::unique_ptr<ProgramTable> table;
        };
        std::unordered_map<const NodeProgram *, CachedTable> tables_;
    };

    /// Simulates rounds until every node sits in a labeled final state or the
    /// cutoff is reached. Same (spec, seed, cutoff) ⇒ identical Trace.
    Trace run_execution(const NetworkSpec &spec, std::uint64_t seed, std::uint64_t round_cutoff,
                        const ExecutionOptions &options = {});

    /// JSON-lines export: a header line, then round records with interleaved
    /// event records, then a summary line. Every line carries "type".
    void write_trace_jsonl(const Trace &trace, std::ostream &out);
    /// round,channel,n_beeping
    void write_trace_csv(const Trace &trace, std::ostream &out);

    /// Streams JSON-lines while the execution runs. Action vectors are written
    /// only for the first `action_window` rounds.
    class JsonlTraceStream final : public ExecutionObserver
    {
    public:
        JsonlTraceStream(std::ostream &out, std::uint64_t action_window);
        bool wants_every_round() const override { return true; }
        void on_start(std::uint64_t seed, std::uint32_t n) override;
        void on_round(const RoundView &view) override;
        void on_finish(const Trace &trace) override;

    private:
        std::ostream &out_;
        std::uint64_t window_;
    };
}
