/*
 Copyright 2026 The lifted-dyn Authors

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
#ifndef LIFTED_DYN_ERRORS_HPP
#define LIFTED_DYN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lifted_dyn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions, empty sampler regions, bad parameters.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A model or function was called in a way its type does not support.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IntegrationDivergedError : public Error {
 public:
  IntegrationDivergedError(const std::string& what, int substep)
      : Error(what), substep_(substep) {}
  int substep() const { return substep_; }

 private:
  int substep_;
};

class DegenerateDecodeError : public Error {
 public:
  using Error::Error;
};

/// Raised when an iterative solver produces non-finite values.
class SolverDivergedError : public Error {
 public:
  using Error::Error;
};

/// Wraps a controller failure with the closed-loop step at which it happened.
class ControllerError : public Error {
 public:
  ControllerError(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_ERRORS_HPP
