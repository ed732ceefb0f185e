/*
 Copyright 2026 The sensi-dmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#ifndef DMPC_ERRORS_HPP
#define DMPC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dmpc {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Model construction / evaluation
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};
class InconsistentTopology : public Error {
 public:
  using Error::Error;
};
class NotEquilibrium : public Error {
 public:
  using Error::Error;
};
class MissingNeighborState : public Error {
 public:
  using Error::Error;
};
class MissingTerminalWeights : public Error {
 public:
  using Error::Error;
};
class DerivativeMismatch : public Error {
 public:
  using Error::Error;
};

// Numerical solvers
class Divergence : public Error {
 public:
  using Error::Error;
};
class LineSearchFailure : public Error {
 public:
  using Error::Error;
};

// Distributed algorithm
class NotAReceiver : public Error {
 public:
  using Error::Error;
};
class IterationBudgetExhausted : public Error {
 public:
  using Error::Error;
};
class OracleFailure : public Error {
 public:
  using Error::Error;
};

// Communication
class TopologyViolation : public Error {
 public:
  using Error::Error;
};
class MissingReport : public Error {
 public:
  using Error::Error;
};

// Terminal-ingredient synthesis
class Infeasible : public Error {
 public:
  using Error::Error;
};
class NumericalFailure : public Error {
 public:
  using Error::Error;
};
class NoFeasibleLevel : public Error {
 public:
  using Error::Error;
};

// Configuration / harness
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmpc

#endif  // DMPC_ERRORS_HPP
