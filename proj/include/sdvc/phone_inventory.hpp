#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sdvc/common.hpp"

namespace sdvc {

// IPA phone set. The inventory is data, not code: it ships as a text file
// with one symbol per line, line order = phone id. The CTC blank takes the
// id right after the last phone.
struct PhoneInventory {
    std::vector<std::string> phones;

    PhoneInventory() = default;
    explicit PhoneInventory(std::vector<std::string> symbols)
        : phones(std::move(symbols)) {
        std::unordered_set<std::string> seen;
        for (const auto& p : phones) {
            if (p.empty())
                throw ValidationError("phone inventory: empty symbol");
            if (!seen.insert(p).second)
                throw ValidationError("phone inventory: duplicate symbol '" + p +
                                      "'");
        }
    }

    int size() const { return static_cast<int>(phones.size()); }
    int blank_id() const { return size(); }

    int id_of(const std::string& symbol) const {
        for (std::size_t i = 0; i < phones.size(); ++i)
            if (phones[i] == symbol) return static_cast<int>(i);
        throw ValidationError("phone '" + symbol + "' not in inventory");
    }

    static PhoneInventory from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in)
            throw IngestError("cannot open phone inventory: " + path.string());
        std::vector<std::string> symbols;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
                line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            symbols.push_back(line);
        }
        return PhoneInventory(std::move(symbols));
    }

    void to_file(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out)
            throw IngestError("cannot write phone inventory: " + path.string());
        for (const auto& p : phones) out << p << '\n';
    }
};

// Small built-in set for unit tests; real runs load the shipped 53-symbol
// IPA file.
inline PhoneInventory test_phone_inventory(int n = 4) {
    static const std::vector<std::string> pool = {"a", "b", "k", "m",
                                                  "o", "s", "t", "u"};
    std::vector<std::string> symbols(pool.begin(),
                                     pool.begin() + std::min<int>(n, pool.size()));
    return PhoneInventory(std::move(symbols));
}

}  // namespace sdvc
