#include "slowfast/error.hpp"

#include <sstream>

namespace slowfast {

namespace {

std::string describe_blow_up(double time, const std::vector<double>& state) {
    std::ostringstream os;
    os.precision(17);
    os << "trajectory blew up at t=" << time << ", state=(";
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (i) os << ", ";
        os << state[i];
    }
    os << ")";
    return os.str();
}

}  // namespace

BlowUpError::BlowUpError(double time, std::vector<double> state)
    : Error(describe_blow_up(time, state)), time_(time), state_(std::move(state)) {}

}  // namespace slowfast
