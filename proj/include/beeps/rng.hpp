#pragma once

#include <cstdint>

namespace beeps
{
    inline constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;

    /// SplitMix64 finalizer; the only mixing primitive used for seeds and streams.
    constexpr std::uint64_t mix64(std::uint64_t x) noexcept
    {
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    /// Seed of trial `trial` in cell `cell`:
    /// mix64(mix64(base + γ·(cell+1)) + γ·(trial+1)).
    constexpr std::uint64_t trial_seed(std::uint64_t base, std::uint64_t cell, std::uint64_t trial) noexcept
    {
        return mix64(mix64(base + golden_gamma * (cell + 1)) + golden_gamma * (trial + 1));
    }

    /// Counter-based per-node random stream: word r of node i under seed s is
    /// mix64(key + γ·r) with key = mix64(s ^ mix64(i + 1)). Streams of distinct
    /// nodes never share state and any word can be computed out of order.
    class NodeStream
    {
    public:
        constexpr NodeStream() noexcept = default;
        constexpr NodeStream(std::uint64_t seed, std::uint64_t node) noexcept : key_(mix64(seed ^ mix64(node + 1))) {}

        constexpr std::uint64_t word(std::uint64_t round) const noexcept { return mix64(key_ + golden_gamma * round); }

    private:
        std::uint64_t key_ = 0;
    };
}
