#include "beeps/counter.hpp"
#include "beeps/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace beeps
{
    namespace
    {
        std::string join_diagnostics(const std::vector<Diagnostic> &diags)
        {
            std::string out;
            for (const auto &d : diags)
            {
                if (!out.empty())
                {
                    out += "; ";
                }
                out += "line " + std::to_string(d.line) + ": " + d.message;
            }
            return out;
        }

        bool is_identifier(std::string_view s)
        {
            if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_'))
            {
                return false;
            }
            return std::all_of(s.begin(), s.end(),
                               [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; });
        }

        std::string upper(std::string s)
        {
            std::transform(s.begin(), s.end(), s.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
            return s;
        }

        struct PendingJump
        {
            std::size_t instruction;
            std::string label;
            std::uint32_t line;
        };
    }

    CounterParseError::CounterParseError(std::vector<Diagnostic> diags)
        : std::invalid_argument(join_diagnostics(diags)), diagnostics(std::move(diags))
    {
    }

    CounterProgram parse_counter_program(std::string_view source, unsigned counter_limit)
    {
        CounterProgram prog;
        prog.k = 1;
        std::vector<Diagnostic> diags;
        std::vector<PendingJump> jumps;
        std::vector<std::pair<std::string, std::uint32_t>> dangling; // labels waiting for an instruction

        std::istringstream in{std::string(source)};
        std::string raw;
        std::uint32_t line_no = 0;
        while (std::getline(in, raw))
        {
            ++line_no;
            if (auto hash = raw.find('#'); hash != std::string::npos)
            {
                raw.erase(hash);
            }
            std::istringstream words(raw);
            std::vector<std::string> tokens;
            for (std::string w; words >> w;)
            {
                tokens.push_back(w);
            }
            std::size_t t = 0;
            while (t < tokens.size() && tokens[t].size() > 1 && tokens[t].back() == ':')
            {
                std::string name = tokens[t].substr(0, tokens[t].size() - 1);
                if (!is_identifier(name))
                {
                    diags.push_back({line_no, "invalid label '" + name + "'"});
                }
                else if (prog.labels.count(name) != 0 ||
                         std::any_of(dangling.begin(), dangling.end(), [&](auto &d) { return d.first == name; }))
                {
                    diags.push_back({line_no, "duplicate label '" + name + "'"});
                }
                else
                {
                    dangling.emplace_back(name, line_no);
                }
                ++t;
            }
            if (t == tokens.size())
            {
                continue;
            }

            const std::string mnemonic = upper(tokens[t]);
            std::vector<std::string> args(tokens.begin() + static_cast<std::ptrdiff_t>(t) + 1, tokens.end());
            CounterInstruction ins;
            ins.line = line_no;
            std::size_t want_args = 0;
            bool has_counter = false;
            bool has_label = false;
            if (mnemonic == "INC" || mnemonic == "DEC" || mnemonic == "ZERO")
            {
                ins.op = mnemonic == "INC" ? CounterOp::inc : mnemonic == "DEC" ? CounterOp::dec : CounterOp::zero;
                want_args = 1;
                has_counter = true;
            }
            else if (mnemonic == "JZ")
            {
                ins.op = CounterOp::jz;
                want_args = 2;
                has_counter = true;
                has_label = true;
            }
            else if (mnemonic == "JMP")
            {
                ins.op = CounterOp::jmp;
                want_args = 1;
                has_label = true;
            }
            else if (mnemonic == "ACCEPT" || mnemonic == "REJECT")
            {
                ins.op = mnemonic == "ACCEPT" ? CounterOp::accept : CounterOp::reject;
            }
            else
            {
                diags.push_back({line_no, "unknown mnemonic '" + tokens[t] + "'"});
                continue;
            }
            if (args.size() != want_args)
            {
                diags.push_back({line_no, mnemonic + " expects " + std::to_string(want_args) + " argument(s)"});
                continue;
            }
            if (has_counter)
            {
                const std::string &a = args[0];
                const bool numeric = !a.empty() && std::all_of(a.begin(), a.end(), [](unsigned char ch) {
                    return std::isdigit(ch) != 0;
                });
                const unsigned long value = numeric && a.size() < 6 ? std::stoul(a) : 0;
                if (!numeric)
                {
                    diags.push_back({line_no, "counter index '" + a + "' is not a number"});
                    continue;
                }
                if (value < 1 || value > counter_limit)
                {
                    diags.push_back({line_no, "counter index out of range: " + a + " (counters are 1.." +
                                                  std::to_string(counter_limit) + ")"});
                    continue;
                }
                ins.counter = static_cast<std::uint8_t>(value - 1);
                prog.k = std::max(prog.k, static_cast<unsigned>(value));
            }
            for (auto &[name, l] : dangling)
            {
                prog.labels[name] = static_cast<std::uint32_t>(prog.code.size());
            }
            dangling.clear();
            if (has_label)
            {
                jumps.push_back({prog.code.size(), args.back(), line_no});
            }
            prog.code.push_back(ins);
        }

        for (const auto &[name, l] : dangling)
        {
            diags.push_back({l, "label '" + name + "' marks no instruction"});
        }
        for (const auto &j : jumps)
        {
            auto it = prog.labels.find(j.label);
            if (it == prog.labels.end())
            {
                diags.push_back({j.line, "undefined label '" + j.label + "'"});
            }
            else
            {
                prog.code[j.instruction].target = it->second;
            }
        }
        if (prog.code.empty())
        {
            diags.push_back({line_no, "program has no instructions"});
        }
        else
        {
            const auto &last = prog.code.back();
            if (last.op != CounterOp::jmp && last.op != CounterOp::accept && last.op != CounterOp::reject)
            {
                diags.push_back({last.line, "control runs past the last instruction"});
            }
        }
        if (diags.empty())
        {
            for (std::uint32_t pc = 0; pc < prog.code.size(); ++pc)
            {
                std::set<std::uint32_t> seen;
                std::uint32_t p = pc;
                while (prog.code[p].op == CounterOp::jmp)
                {
                    if (!seen.insert(p).second)
                    {
                        diags.push_back({prog.code[pc].line, "JMP cycle never reaches an operation"});
                        break;
                    }
                    p = prog.code[p].target;
                }
                if (!diags.empty())
                {
                    break;
                }
            }
        }
        if (!diags.empty())
        {
            std::sort(diags.begin(), diags.end(), [](const auto &a, const auto &b) { return a.line < b.line; });
            throw CounterParseError(std::move(diags));
        }
        return prog;
    }

    CounterProgram load_counter_program(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw IoError("cannot read counter program '" + path + "'");
        }
        std::stringstream buf;
        buf << in.rdbuf();
        return parse_counter_program(buf.str());
    }

    std::string_view to_string(CounterDecision d) noexcept
    {
        switch (d)
        {
        case CounterDecision::accept:
            return "accept";
        case CounterDecision::reject:
            return "reject";
        case CounterDecision::timeout:
            return "timeout";
        }
        return "?";
    }

    Interpretation interpret_counter_program(const CounterProgram &prog, const std::vector<std::uint64_t> &inputs,
                                             std::uint64_t cap, std::uint64_t step_budget)
    {
        if (inputs.size() > max_counters)
        {
            throw std::invalid_argument("at most " + std::to_string(max_counters) + " counter inputs");
        }
        std::array<std::uint64_t, max_counters> c{};
        for (std::size_t i = 0; i < inputs.size(); ++i)
        {
            if (inputs[i] > cap)
            {
                throw std::invalid_argument("input " + std::to_string(inputs[i]) + " exceeds capacity " +
                                            std::to_string(cap));
            }
            c[i] = inputs[i];
        }
        Interpretation out;
        std::uint32_t pc = 0;
        while (true)
        {
            if (out.steps == step_budget)
            {
                throw NonDecider(step_budget);
            }
            ++out.steps;
            const auto &ins = prog.code.at(pc);
            switch (ins.op)
            {
            case CounterOp::inc:
                c[ins.counter] = std::min(c[ins.counter] + 1, cap);
                ++pc;
                break;
            case CounterOp::dec:
                c[ins.counter] = c[ins.counter] == 0 ? 0 : c[ins.counter] - 1;
                ++pc;
                break;
            case CounterOp::zero:
                c[ins.counter] = 0;
                ++pc;
                break;
            case CounterOp::jz:
                pc = c[ins.counter] == 0 ? ins.target : pc + 1;
                break;
            case CounterOp::jmp:
                pc = ins.target;
                break;
            case CounterOp::accept:
                out.decision = CounterDecision::accept;
                return out;
            case CounterOp::reject:
                out.decision = CounterDecision::reject;
                return out;
            }
        }
    }

    std::string_view to_string(Opcode op) noexcept
    {
        switch (op)
        {
        case Opcode::inc:
            return "INC";
        case Opcode::dec:
            return "DEC";
        case Opcode::zero:
            return "ZERO";
        case Opcode::cmpz:
            return "CMPZ";
        case Opcode::accept:
            return "ACCEPT";
        case Opcode::reject:
            return "REJECT";
        }
        return "?";
    }

    std::array<bool, frame_pattern_rounds> encode_frame(Frame f)
    {
        const auto op = static_cast<unsigned>(f.op);
        std::array<bool, frame_pattern_rounds> bits{};
        bits[0] = (op >> 2) & 1;
        bits[1] = (op >> 1) & 1;
        bits[2] = op & 1;
        bits[3] = (f.counter >> 1) & 1;
        bits[4] = f.counter & 1;
        bits[5] = bits[0] ^ bits[1] ^ bits[2] ^ bits[3] ^ bits[4];
        return bits;
    }

    std::optional<Frame> decode_frame(const std::array<bool, frame_pattern_rounds> &bits)
    {
        if ((bits[0] ^ bits[1] ^ bits[2] ^ bits[3] ^ bits[4]) != bits[5])
        {
            return std::nullopt;
        }
        const unsigned op = (bits[0] << 2) | (bits[1] << 1) | static_cast<unsigned>(bits[2]);
        if (op < 1 || op > 6)
        {
            return std::nullopt;
        }
        return Frame{static_cast<Opcode>(op), static_cast<std::uint8_t>((bits[3] << 1) | bits[4])};
    }

    std::uint32_t resolve_jumps(const CounterProgram &prog, std::uint32_t pc)
    {
        for (std::size_t hops = 0; prog.code.at(pc).op == CounterOp::jmp; ++hops)
        {
            if (hops > prog.code.size())
            {
                throw std::logic_error("JMP cycle");
            }
            pc = prog.code[pc].target;
        }
        return pc;
    }

    Frame frame_for(const CounterProgram &prog, std::uint32_t pc)
    {
        const auto &ins = prog.code.at(resolve_jumps(prog, pc));
        switch (ins.op)
        {
        case CounterOp::inc:
            return {Opcode::inc, ins.counter};
        case CounterOp::dec:
            return {Opcode::dec, ins.counter};
        case CounterOp::zero:
            return {Opcode::zero, ins.counter};
        case CounterOp::jz:
            return {Opcode::cmpz, ins.counter};
        case CounterOp::accept:
            return {Opcode::accept, 0};
        case CounterOp::reject:
        default:
            return {Opcode::reject, 0};
        }
    }
}
