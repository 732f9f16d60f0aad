// Copyright 2026-present the criticsearch authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "criticsearch/errors.hpp"

namespace criticsearch {

InvalidToken::InvalidToken(const std::string& what) : Error("invalid token: " + what) {}
ConfigError::ConfigError(const std::string& what) : Error("config error: " + what) {}
NoPathError::NoPathError(const std::string& what) : Error("no path: " + what) {}
EpisodeDone::EpisodeDone(const std::string& what) : Error("episode done: " + what) {}
NumericalError::NumericalError(const std::string& what) : Error("numerical error: " + what) {}
ShapeError::ShapeError(const std::string& what) : Error("shape error: " + what) {}
EndpointError::EndpointError(const std::string& what) : Error("endpoint error: " + what) {}
RunError::RunError(const std::string& what) : Error("run error: " + what) {}
FormatError::FormatError(const std::string& what) : Error("format error: " + what) {}

}  // namespace criticsearch
