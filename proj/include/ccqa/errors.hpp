#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ccqa {

// Base error; the category string surfaces in the CLI's machine-readable
// error record.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct IngestError : Error {
    explicit IngestError(const std::string& w) : Error("ingest", w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("config", w) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error("domain", w) {}
};

struct ProviderError : Error {
    explicit ProviderError(const std::string& w) : Error("provider", w) {}
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error("io", w) {}
};

struct DigestError : Error {
    explicit DigestError(const std::string& w) : Error("digest-mismatch", w) {}
};

}  // namespace ccqa
