#pragma once

#include <cstdint>
#include <vector>

namespace misbayes {

// Deterministic splittable random stream. A stream is identified by the master
// seed plus the path of child indices taken from the root, and every draw is a
// pure function of that identity and a draw counter. Child streams derived with
// distinct indices are statistically independent, and results never depend on
// thread scheduling as long as each task draws from its own stream.
class RngStream {
public:
    explicit RngStream(std::uint64_t master_seed);

    // Derive the child stream for a task index; does not disturb this stream.
    [[nodiscard]] RngStream child(std::uint64_t task_index) const;
    [[nodiscard]] RngStream descend(const std::vector<std::uint64_t>& path) const;

    std::uint64_t next_u64();
    double uniform();            // strictly inside (0,1)
    double normal();             // standard normal (Box-Muller)
    double gamma(double shape);  // unit rate, Marsaglia-Tsang
    double exponential();        // unit rate

private:
    RngStream(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace misbayes
