#include "beeps/analysis.hpp"
#include "beeps/errors.hpp"
#include "beeps/rng.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace beeps
{
    std::size_t ConfigurationHash::operator()(const Configuration &c) const noexcept
    {
        std::uint64_t h = c.size();
        for (auto s : c)
        {
            h = mix64(h + golden_gamma * (s + 1));
        }
        return static_cast<std::size_t>(h);
    }

    std::map<StateId, std::uint32_t> configuration_counts(const Configuration &c)
    {
        std::map<StateId, std::uint32_t> out;
        for (auto s : c)
        {
            ++out[s];
        }
        return out;
    }

    mpq_class ConfigurationDistribution::total() const
    {
        mpq_class sum = 0;
        for (const auto &[c, p] : mass)
        {
            sum += p;
        }
        return sum;
    }

    ConfigurationDistribution ConfigurationDistribution::point(Configuration c)
    {
        ConfigurationDistribution d;
        d.n = static_cast<std::uint32_t>(c.size());
        std::sort(c.begin(), c.end());
        d.mass.emplace(std::move(c), mpq_class(1));
        return d;
    }

    double configuration_space_size(std::uint32_t n, std::size_t states)
    {
        if (states == 0)
        {
            return 0;
        }
        // C(n+s-1, n) via lgamma keeps the value finite for any realistic input.
        const double k = static_cast<double>(states - 1);
        const double m = static_cast<double>(n) + k;
        return std::round(std::exp(std::lgamma(m + 1) - std::lgamma(k + 1) - std::lgamma(static_cast<double>(n) + 1)));
    }

    void check_configuration_space(std::uint32_t n, std::size_t states, double cap)
    {
        const double size = configuration_space_size(n, states);
        if (size > cap)
        {
            throw ConfigurationSpaceOverflow(cap, size);
        }
    }

    Channel configuration_channel(const BeepMachine &machine, const Configuration &c)
    {
        for (auto s : c)
        {
            if (machine.is_beep(s))
            {
                return Channel::beep;
            }
        }
        return Channel::silent;
    }

    ConfigurationDistribution initial_distribution(const BeepMachine &machine, std::uint32_t n)
    {
        if (n < 1)
        {
            throw std::invalid_argument("exact analysis needs n >= 1");
        }
        return ConfigurationDistribution::point(Configuration(n, machine.start()));
    }

    namespace
    {
        using MassMap = std::unordered_map<Configuration, mpq_class, ConfigurationHash>;

        mpq_class to_mpq(const Rational &r)
        {
            mpq_class q{mpz_class(static_cast<unsigned long>(r.num())), mpz_class(static_cast<unsigned long>(r.den()))};
            q.canonicalize();
            return q;
        }

        struct Group
        {
            std::uint32_t count;
            std::vector<std::pair<StateId, mpq_class>> branches;
        };

        std::uint64_t binomial(std::uint32_t n, std::uint32_t k)
        {
            std::uint64_t r = 1;
            for (std::uint32_t i = 1; i <= k; ++i)
            {
                r = r * (n - k + i) / i;
            }
            return r;
        }

        /// Splits each group's nodes over its branches; one output per joint split.
        class Splitter
        {
        public:
            Splitter(const std::vector<Group> &groups, std::uint32_t n, MassMap &out) : groups_(groups), out_(out)
            {
                current_.reserve(n);
            }

            void run(const mpq_class &weight) { group(0, weight); }

        private:
            void group(std::size_t g, const mpq_class &weight)
            {
                if (g == groups_.size())
                {
                    Configuration c = current_;
                    std::sort(c.begin(), c.end());
                    out_[std::move(c)] += weight;
                    return;
                }
                branch(g, 0, groups_[g].count, weight);
            }

            void branch(std::size_t g, std::size_t b, std::uint32_t remaining, const mpq_class &weight)
            {
                const auto &branches = groups_[g].branches;
                const auto &[target, p] = branches[b];
                if (b + 1 == branches.size())
                {
                    mpq_class w = weight;
                    for (std::uint32_t i = 0; i < remaining; ++i)
                    {
                        w *= p;
                        current_.push_back(target);
                    }
                    group(g + 1, w);
                    current_.resize(current_.size() - remaining);
                    return;
                }
                mpq_class pk = 1;
                for (std::uint32_t k = 0; k <= remaining; ++k)
                {
                    if (k > 0)
                    {
                        pk *= p;
                        current_.push_back(target);
                    }
                    mpq_class w = weight * pk * binomial(remaining, k);
                    branch(g, b + 1, remaining - k, w);
                }
                current_.resize(current_.size() - remaining);
            }

            const std::vector<Group> &groups_;
            MassMap &out_;
            Configuration current_;
        };

        /// Branches of δ as exact rationals, indexed by [channel][state].
        struct ExactDelta
        {
            explicit ExactDelta(const BeepMachine &m)
            {
                for (int c = 0; c < 2; ++c)
                {
                    auto &table = rows[c];
                    table.resize(m.state_count());
                    for (StateId s = 0; s < m.state_count(); ++s)
                    {
                        for (const auto &[to, p] : m.delta(s, static_cast<Channel>(c)).entries)
                        {
                            if (!p.is_zero())
                            {
                                table[s].emplace_back(to, to_mpq(p));
                            }
                        }
                    }
                }
            }
            std::vector<std::vector<std::pair<StateId, mpq_class>>> rows[2];
        };

        void push_source(const BeepMachine &machine, const ExactDelta &delta, const Configuration &c,
                         const mpq_class &weight, MassMap &out)
        {
            const auto channel = static_cast<int>(configuration_channel(machine, c));
            std::vector<Group> groups;
            for (std::size_t i = 0; i < c.size();)
            {
                std::size_t j = i;
                while (j < c.size() && c[j] == c[i])
                {
                    ++j;
                }
                groups.push_back(Group{static_cast<std::uint32_t>(j - i), delta.rows[channel][c[i]]});
                i = j;
            }
            Splitter(groups, static_cast<std::uint32_t>(c.size()), out).run(weight);
        }

        void validate_input(const BeepMachine &machine, const ConfigurationDistribution &dist, double cap)
        {
            check_configuration_space(dist.n, machine.state_count(), cap);
            for (const auto &[c, p] : dist.mass)
            {
                if (c.size() != dist.n)
                {
                    throw std::invalid_argument("configuration size differs from n");
                }
                for (auto s : c)
                {
                    if (s >= machine.state_count())
                    {
                        throw std::invalid_argument("configuration references unknown state");
                    }
                }
            }
        }

        ConfigurationDistribution step_with(const BeepMachine &machine, const ExactDelta &delta,
                                            const ConfigurationDistribution &dist, bool parallel)
        {
            ConfigurationDistribution next;
            next.n = dist.n;
            next.residual = dist.residual;
            if (!parallel)
            {
                for (const auto &[c, p] : dist.mass)
                {
                    push_source(machine, delta, c, p, next.mass);
                }
                return next;
            }

            std::vector<const MassMap::value_type *> sources;
            sources.reserve(dist.mass.size());
            for (const auto &entry : dist.mass)
            {
                sources.push_back(&entry);
            }
            const int threads = std::max(1, std::min<int>(omp_get_max_threads(), static_cast<int>(sources.size())));
            std::vector<MassMap> partial(static_cast<std::size_t>(threads));
#pragma omp parallel for num_threads(threads) schedule(dynamic, 16)
            for (std::size_t i = 0; i < sources.size(); ++i)
            {
                push_source(machine, delta, sources[i]->first, sources[i]->second,
                            partial[static_cast<std::size_t>(omp_get_thread_num())]);
            }
            next.mass = std::move(partial[0]);
            for (std::size_t t = 1; t < partial.size(); ++t)
            {
                for (auto &[c, p] : partial[t])
                {
                    next.mass[c] += p;
                }
            }
            return next;
        }

        void check_terminal_finals(const BeepMachine &machine)
        {
            for (const auto &[label, s] : machine.finals())
            {
                for (auto ch : {Channel::silent, Channel::beep})
                {
                    const auto &d = machine.delta(s, ch).entries;
                    const bool loops = std::all_of(d.begin(), d.end(), [&](const auto &e) {
                        return e.second.is_zero() || e.first == s;
                    });
                    if (!loops)
                    {
                        throw std::invalid_argument("final state '" + std::string(to_string(label)) +
                                                    "' is not absorbing");
                    }
                }
            }
        }
    }

    ConfigurationDistribution step_exact(const BeepMachine &machine, const ConfigurationDistribution &dist, double cap)
    {
        validate_input(machine, dist, cap);
        return step_with(machine, ExactDelta(machine), dist, true);
    }

    ConfigurationDistribution step_exact_serial(const BeepMachine &machine, const ConfigurationDistribution &dist,
                                                double cap)
    {
        validate_input(machine, dist, cap);
        return step_with(machine, ExactDelta(machine), dist, false);
    }

    mpq_class AbsorptionReport::profile(const std::string &name) const
    {
        auto it = profiles.find(name);
        return it == profiles.end() ? mpq_class(0) : it->second;
    }

    std::string profile_name(const std::map<FinalLabel, std::uint32_t> &counts)
    {
        std::map<std::string, std::uint32_t> named;
        for (const auto &[label, k] : counts)
        {
            named[std::string(to_string(label))] += k;
        }
        std::string out;
        for (const auto &[name, k] : named)
        {
            if (!out.empty())
            {
                out += ',';
            }
            out += name + "=" + std::to_string(k);
        }
        return out;
    }

    AbsorptionReport absorb_exact(const BeepMachine &machine, std::uint32_t n, const AbsorbOptions &options)
    {
        check_terminal_finals(machine);
        check_configuration_space(n, machine.state_count(), options.cap);

        const ExactDelta delta(machine);
        const mpq_class tail = to_mpq(options.tail_bound);
        AbsorptionReport report;
        report.n = n;
        report.states = machine.state_count();

        auto leaders = [&](const Configuration &c) {
            std::uint32_t k = 0;
            for (auto s : c)
            {
                k += machine.label_of(s) == FinalLabel::leader ? 1 : 0;
            }
            return k;
        };

        // Absorbed mass leaves the live distribution through `settled`.
        mpq_class settled = 0;
        auto settle = [&](ConfigurationDistribution &dist) {
            for (auto it = dist.mass.begin(); it != dist.mass.end();)
            {
                std::map<FinalLabel, std::uint32_t> counts;
                bool all_final = true;
                for (auto s : it->first)
                {
                    auto label = machine.label_of(s);
                    if (!label)
                    {
                        all_final = false;
                        break;
                    }
                    ++counts[*label];
                }
                if (!all_final)
                {
                    ++it;
                    continue;
                }
                report.profiles[profile_name(counts)] += it->second;
                settled += it->second;
                it = dist.mass.erase(it);
            }
        };

        ConfigurationDistribution dist = initial_distribution(machine, n);
        settle(dist);
        mpq_class live = dist.total();
        while (live > tail && report.steps < options.horizon)
        {
            dist = step_with(machine, delta, dist, options.parallel);
            ++report.steps;
            settle(dist);
            live = dist.total();
            if (live + settled + dist.residual != 1)
            {
                throw std::logic_error("probability mass not conserved at step " + std::to_string(report.steps));
            }
            if (options.on_step)
            {
                options.on_step(report.steps, live);
            }
        }
        report.residual = live;
        report.truncated = live > tail;

        for (const auto &[name, p] : report.profiles)
        {
            const auto pos = name.find("leader=");
            if (pos != std::string::npos && (pos == 0 || name[pos - 1] == ',') &&
                std::stoul(name.substr(pos + 7)) >= 2)
            {
                report.violation += p;
            }
        }
        // Leader states are absorbing, so a live configuration with two leaders is already a violation.
        for (const auto &[c, p] : dist.mass)
        {
            if (leaders(c) >= 2)
            {
                report.violation += p;
            }
        }
        return report;
    }

    std::string report_to_json(const AbsorptionReport &report)
    {
        using nlohmann::ordered_json;
        auto rational = [](const mpq_class &q) { return q.get_num().get_str() + "/" + q.get_den().get_str(); };
        ordered_json profiles = ordered_json::object();
        for (const auto &[name, p] : report.profiles)
        {
            profiles[name] = {{"probability", rational(p)}, {"probability_float", p.get_d()}};
        }
        ordered_json j;
        j["n"] = report.n;
        j["states"] = report.states;
        j["steps"] = report.steps;
        j["truncated"] = report.truncated;
        j["violation"] = rational(report.violation);
        j["violation_float"] = report.violation.get_d();
        j["residual"] = rational(report.residual);
        j["residual_float"] = report.residual.get_d();
        j["profiles"] = profiles;
        return j.dump(2) + "\n";
    }
}
