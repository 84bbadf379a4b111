#pragma once

#include <stdexcept>
#include <string>

namespace bermudan {

class NotPositiveSemiDefinite : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class BatchTooSmall : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DateOutOfRange : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// Raised when the stopping rule exercises at time 0, so there is no interval to hedge.
class NothingToHedge : public std::runtime_error {
public:
    explicit NothingToHedge(double immediate_value)
        : std::runtime_error("option is exercised at time 0; nothing to hedge"),
          immediate_value_(immediate_value) {}
    double immediate_value() const { return immediate_value_; }

private:
    double immediate_value_;
};

class TooLarge : public std::length_error {
public:
    using std::length_error::length_error;
};

// Invalid experiment configuration; `key` is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

}  // namespace bermudan
