#include "beeps/errors.hpp"
#include "beeps/machine.hpp"

#include <json.hpp>

namespace beeps
{
    namespace
    {
        using nlohmann::json;

        json dist_to_json(const TransitionDistribution &d)
        {
            json out = json::array();
            for (const auto &[to, p] : d.entries)
            {
                out.push_back(json::array({to, p.to_string()}));
            }
            return out;
        }

        TransitionDistribution dist_from_json(const json &j)
        {
            TransitionDistribution d;
            for (const auto &entry : j)
            {
                if (!entry.is_array() || entry.size() != 2)
                {
                    throw MalformedMachine("distribution entries must be [state, \"num/den\"] pairs");
                }
                d.entries.emplace_back(entry[0].get<StateId>(), Probability::parse(entry[1].get<std::string>()));
            }
            return d;
        }

        std::map<StateId, TransitionDistribution> delta_from_json(const json &j)
        {
            std::map<StateId, TransitionDistribution> out;
            for (const auto &[key, value] : j.items())
            {
                out[static_cast<StateId>(std::stoul(key))] = dist_from_json(value);
            }
            return out;
        }
    }

    std::string machine_to_json(const BeepMachine &machine)
    {
        json j;
        j["receive_states"] = machine.receive_states();
        j["beep_states"] = machine.beep_states();
        j["start"] = machine.start();
        json silent = json::object();
        json beep = json::object();
        for (StateId s = 0; s < machine.state_count(); ++s)
        {
            silent[std::to_string(s)] = dist_to_json(machine.delta(s, Channel::silent));
            beep[std::to_string(s)] = dist_to_json(machine.delta(s, Channel::beep));
        }
        j["delta_silent"] = std::move(silent);
        j["delta_beep"] = std::move(beep);
        json finals = json::object();
        for (const auto &[label, id] : machine.finals())
        {
            finals[std::string(to_string(label))] = id;
        }
        j["finals"] = std::move(finals);
        return j.dump(2);
    }

    BeepMachine machine_from_json(std::string_view text)
    {
        MachineSpec spec;
        try
        {
            json j = json::parse(text);
            spec.receive_states = j.at("receive_states").get<std::vector<StateId>>();
            spec.beep_states = j.at("beep_states").get<std::vector<StateId>>();
            spec.start = j.at("start").get<StateId>();
            spec.delta_silent = delta_from_json(j.at("delta_silent"));
            spec.delta_beep = delta_from_json(j.at("delta_beep"));
            for (const auto &[key, value] : j.at("finals").items())
            {
                auto label = parse_final_label(key);
                if (!label)
                {
                    throw MalformedMachine("unknown final label '" + key + "'");
                }
                spec.finals[*label] = value.get<StateId>();
            }
        }
        catch (const json::exception &e)
        {
            throw MalformedMachine(std::string("machine JSON: ") + e.what());
        }
        catch (const std::logic_error &e)
        {
            if (dynamic_cast<const MalformedMachine *>(&e) != nullptr)
            {
                throw;
            }
            throw MalformedMachine(std::string("machine JSON: ") + e.what());
        }
        return BeepMachine{spec};
    }
}
