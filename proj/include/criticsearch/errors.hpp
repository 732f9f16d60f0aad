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

#pragma once

#include <stdexcept>
#include <string>

namespace criticsearch {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define CRITICSEARCH_ERROR(Name)                  \
    class Name : public Error {                   \
    public:                                       \
        explicit Name(const std::string& what);   \
    }

CRITICSEARCH_ERROR(InvalidToken);
CRITICSEARCH_ERROR(ConfigError);
CRITICSEARCH_ERROR(NoPathError);
CRITICSEARCH_ERROR(EpisodeDone);
CRITICSEARCH_ERROR(NumericalError);
CRITICSEARCH_ERROR(ShapeError);
CRITICSEARCH_ERROR(EndpointError);
CRITICSEARCH_ERROR(RunError);
CRITICSEARCH_ERROR(FormatError);

#undef CRITICSEARCH_ERROR

// Failures of the critique score parser.
class ScoreParseError : public Error {
public:
    enum class Kind { MissingScore, BadToken, CountMismatch };
    ScoreParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class MissingScore : public ScoreParseError {
public:
    explicit MissingScore(const std::string& what) : ScoreParseError(Kind::MissingScore, what) {}
};

class BadToken : public ScoreParseError {
public:
    explicit BadToken(const std::string& what) : ScoreParseError(Kind::BadToken, what) {}
};

class CountMismatch : public ScoreParseError {
public:
    explicit CountMismatch(const std::string& what) : ScoreParseError(Kind::CountMismatch, what) {}
};

}  // namespace criticsearch
