// Command-line front end: experiments, exact analysis, state audit and trace export.

#include "beeps/analysis.hpp"
#include "beeps/errors.hpp"
#include "beeps/harness.hpp"
#include "beeps/machine.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace beeps;

namespace
{
    constexpr int exit_invalid = 2;
    constexpr int exit_overflow = 3;
    constexpr int exit_io = 4;

    std::vector<std::uint32_t> parse_n_list(const std::vector<std::string> &items)
    {
        std::vector<std::uint32_t> out;
        for (const auto &item : items)
        {
            std::stringstream ss(item);
            for (std::string part; std::getline(ss, part, ',');)
            {
                if (part.empty() || part.size() > 9 || part.find_first_not_of("0123456789") != std::string::npos)
                {
                    throw std::invalid_argument("bad network size '" + part + "'");
                }
                out.push_back(static_cast<std::uint32_t>(std::stoul(part)));
            }
        }
        return out;
    }

    std::string read_file(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw IoError("cannot read '" + path + "'");
        }
        std::stringstream buf;
        buf << in.rdbuf();
        return buf.str();
    }

    std::ofstream open_out(const std::string &path)
    {
        std::ofstream out(path);
        if (!out)
        {
            throw IoError("cannot write '" + path + "'");
        }
        return out;
    }

    /// Raw flag values; applied on top of an optional JSON config.
    struct Flags
    {
        std::string config;
        std::string algo;
        std::vector<std::string> n;
        std::string epsilon;
        std::uint64_t q = 0;
        std::uint32_t n_lower_bound = 0;
        std::uint32_t c = 0;
        std::uint32_t count_bound = 0;
        std::uint64_t trials = 0;
        std::uint64_t seed = 0;
        std::uint64_t cutoff = 0;
        int threads = 0;
        bool raise_cutoff = false;
        std::string program;
        std::vector<std::string> init;
        std::string out;
    };

    void add_common(CLI::App *cmd, Flags &f)
    {
        cmd->add_option("--config", f.config, "JSON file with experiment settings");
        cmd->add_option("--n", f.n, "network sizes, comma separated or repeated");
        cmd->add_option("--epsilon", f.epsilon, "error bound as a rational, e.g. 1/10 or 0.1");
        cmd->add_option("--trials", f.trials, "trials per network size");
        cmd->add_option("--seed", f.seed, "base seed");
        cmd->add_option("--cutoff", f.cutoff, "round cutoff per trial");
        cmd->add_flag("--raise-cutoff-once", f.raise_cutoff, "re-run unfinished trials once with 10x the cutoff");
        cmd->add_option("--threads", f.threads, "worker threads (0 = all)");
        cmd->add_option("--out", f.out, "CSV output path");
    }

    void add_params(CLI::App *cmd, Flags &f)
    {
        cmd->add_option("--q", f.q, "precision q");
        cmd->add_option("--n-lower-bound", f.n_lower_bound, "known lower bound on n");
        cmd->add_option("--c", f.c, "state-optimal exponent c");
        cmd->add_option("--count-bound", f.count_bound, "constant-state count bound");
    }

    ExperimentConfig build_config(CLI::App *cmd, const Flags &f, ExperimentKind kind)
    {
        ExperimentConfig cfg;
        cfg.kind = kind;
        if (!f.config.empty())
        {
            cfg = config_from_json(read_file(f.config), cfg);
            cfg.kind = kind;
        }
        auto given = [&](const char *name) { return cmd->get_option_no_throw(name) && cmd->count(name) > 0; };
        if (given("--algo") || given("--base-algo"))
            cfg.algo = f.algo;
        if (given("--n"))
            cfg.ns = parse_n_list(f.n);
        if (given("--epsilon"))
            cfg.epsilon = Rational::parse(f.epsilon);
        if (given("--q"))
            cfg.q = f.q;
        if (given("--n-lower-bound"))
            cfg.n_lower_bound = f.n_lower_bound;
        if (given("--c"))
            cfg.c = f.c;
        if (given("--count-bound"))
            cfg.count_bound = f.count_bound;
        if (given("--trials"))
            cfg.trials = f.trials;
        if (given("--seed"))
            cfg.seed = f.seed;
        if (given("--cutoff"))
            cfg.cutoff = f.cutoff;
        if (given("--raise-cutoff-once"))
            cfg.raise_cutoff_once = true;
        if (given("--threads"))
            cfg.threads = f.threads;
        if (given("--program"))
            cfg.program_path = f.program;
        if (given("--init"))
        {
            cfg.inits.clear();
            for (const auto &i : f.init)
            {
                cfg.inits.push_back(parse_counter_init(i));
            }
        }
        if (given("--out"))
            cfg.out_csv = f.out;
        if (cfg.out_csv.empty())
        {
            throw std::invalid_argument("--out is required");
        }
        cfg.validate();
        return cfg;
    }

    int run_experiment(const ExperimentConfig &cfg)
    {
        const Report report = run_trials(cfg);
        const Summary summary = summarize(report);
        auto out = open_out(cfg.out_csv);
        out << summary.csv;
        if (!out)
        {
            throw IoError("failed writing '" + cfg.out_csv + "'");
        }
        std::cout << summary.text;
        return 0;
    }

    ProgramPtr election_program(const std::string &algo, const ElectionParams &params, const Flags &f)
    {
        SubroutineOptions options;
        if (f.c != 0)
            options.c = f.c;
        if (f.count_bound != 0)
            options.count_bound = f.count_bound;
        return build_universal(subroutine_by_name(algo, params, options), params);
    }

    ElectionParams params_from(const Flags &f)
    {
        return ElectionParams::make(f.epsilon.empty() ? Rational{1, 10} : Rational::parse(f.epsilon),
                                    f.q == 0 ? 2 : f.q, f.n_lower_bound == 0 ? 1 : f.n_lower_bound);
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"Beeping-network leader election simulator and analysis toolkit"};
    app.require_subcommand(1);

    Flags elect_f;
    auto *elect = app.add_subcommand("elect", "Monte Carlo leader election experiment");
    elect->add_option("--algo", elect_f.algo, "state-optimal | fixed-error | constant-state | double-safe");
    add_common(elect, elect_f);
    add_params(elect, elect_f);

    Flags counter_f;
    auto *counter = app.add_subcommand("counter", "distributed counter-machine experiment");
    counter->add_option("--program", counter_f.program, "counter program (.cm)");
    counter->add_option("--init", counter_f.init, "initial counter value, c<k>=<int|all>");
    add_common(counter, counter_f);
    add_params(counter, counter_f);

    Flags lonely_f;
    auto *lonely = app.add_subcommand("lonely", "loneliness detection experiment");
    lonely->add_option("--base-algo", lonely_f.algo, "leader election the detector is built from");
    add_common(lonely, lonely_f);
    add_params(lonely, lonely_f);

    Flags analyze_f;
    std::uint32_t analyze_n = 0;
    std::uint64_t horizon = 100'000;
    std::string tail_bound = "1/1000000000";
    auto *analyze = app.add_subcommand("analyze", "exact absorption analysis on a small network");
    analyze->add_option("--algo", analyze_f.algo, "election algorithm")->required();
    analyze->add_option("--n", analyze_n, "network size")->required();
    analyze->add_option("--epsilon", analyze_f.epsilon, "error bound")->required();
    analyze->add_option("--horizon", horizon, "maximum exact steps");
    analyze->add_option("--tail-bound", tail_bound, "stop once undecided mass is at most this");
    analyze->add_option("--out", analyze_f.out, "JSON report path")->required();
    add_params(analyze, analyze_f);

    Flags audit_f;
    auto *audit = app.add_subcommand("audit", "count reachable local states of an election program");
    audit->add_option("--algo", audit_f.algo, "election algorithm")->required();
    audit->add_option("--epsilon", audit_f.epsilon, "error bound")->required();
    add_params(audit, audit_f);

    Flags trace_f;
    std::uint32_t trace_n = 0;
    std::uint64_t trace_seed = 0;
    std::uint64_t trace_cutoff = 0;
    std::string trace_format = "jsonl";
    auto *trace = app.add_subcommand("trace", "export the full trace of one execution");
    trace->add_option("--algo", trace_f.algo, "election algorithm")->required();
    trace->add_option("--n", trace_n, "network size")->required();
    trace->add_option("--seed", trace_seed, "execution seed")->required();
    trace->add_option("--epsilon", trace_f.epsilon, "error bound (default 1/10)");
    trace->add_option("--cutoff", trace_cutoff, "round cutoff");
    trace->add_option("--format", trace_format, "jsonl or csv")->check(CLI::IsMember({"jsonl", "csv"}));
    trace->add_option("--out", trace_f.out, "output path")->required();
    add_params(trace, trace_f);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_invalid;
    }

    try
    {
        if (*elect)
        {
            return run_experiment(build_config(elect, elect_f, ExperimentKind::elect));
        }
        if (*counter)
        {
            return run_experiment(build_config(counter, counter_f, ExperimentKind::counter));
        }
        if (*lonely)
        {
            return run_experiment(build_config(lonely, lonely_f, ExperimentKind::lonely));
        }
        if (*analyze)
        {
            const auto params = params_from(analyze_f);
            const auto machine = extract_machine(*election_program(analyze_f.algo, params, analyze_f));
            AbsorbOptions options;
            options.horizon = horizon;
            options.tail_bound = Rational::parse(tail_bound);
            const auto report = absorb_exact(machine, analyze_n, options);
            auto out = open_out(analyze_f.out);
            out << report_to_json(report);
            std::cout << "states " << report.states << ", steps " << report.steps << ", violation "
                      << report.violation.get_d() << ", residual " << report.residual.get_d()
                      << (report.truncated ? " (truncated)" : "") << '\n';
            return 0;
        }
        if (*audit)
        {
            const auto params = params_from(audit_f);
            std::cout << audit_state_count(*election_program(audit_f.algo, params, audit_f)) << '\n';
            return 0;
        }
        if (*trace)
        {
            const auto params = params_from(trace_f);
            const auto program = election_program(trace_f.algo, params, trace_f);
            const std::uint64_t cutoff =
                trace_cutoff != 0 ? trace_cutoff
                                  : (trace_f.algo == "state-optimal" ? default_slow_cutoff : default_fast_cutoff);
            const Trace t = run_execution(NetworkSpec::uniform(program, trace_n), trace_seed, cutoff);
            auto out = open_out(trace_f.out);
            if (trace_format == "csv")
            {
                write_trace_csv(t, out);
            }
            else
            {
                write_trace_jsonl(t, out);
            }
            std::cout << "rounds " << t.rounds_elapsed << (t.terminated ? "" : " (cutoff)") << ", leaders "
                      << t.count_label(FinalLabel::leader) << '\n';
            return 0;
        }
    }
    catch (const EnumerationOverflow &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_overflow;
    }
    catch (const ConfigurationSpaceOverflow &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_overflow;
    }
    catch (const IoError &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_io;
    }
    catch (const NonDecider &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_invalid;
    }
    catch (const std::invalid_argument &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_invalid;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
