#pragma once

#include <stdexcept>
#include <string>

namespace tmpc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define TMPC_DEFINE_ERROR(Name)                        \
    class Name : public Error {                        \
    public:                                            \
        using Error::Error;                            \
    }

// model
TMPC_DEFINE_ERROR(IntegrationError);
TMPC_DEFINE_ERROR(DomainError);
TMPC_DEFINE_ERROR(DimensionError);

// equilibria
TMPC_DEFINE_ERROR(NoEquilibriumError);
TMPC_DEFINE_ERROR(InfeasibleEquilibriumError);
TMPC_DEFINE_ERROR(EmptyRegionError);

// lipschitz / tubes
TMPC_DEFINE_ERROR(NotLipschitzError);
TMPC_DEFINE_ERROR(HorizonTooLongError);

// terminal
TMPC_DEFINE_ERROR(SynthesisFailedError);
TMPC_DEFINE_ERROR(TerminalDesignError);

// ocp / sim
TMPC_DEFINE_ERROR(CostEvaluationError);
TMPC_DEFINE_ERROR(InfeasibleProblemError);
TMPC_DEFINE_ERROR(ScenarioInfeasibleError);

// cli
TMPC_DEFINE_ERROR(ConfigError);

#undef TMPC_DEFINE_ERROR

} // namespace tmpc
