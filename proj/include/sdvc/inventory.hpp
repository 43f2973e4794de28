#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "sdvc/common.hpp"

namespace sdvc {

// Ordered class list for one annotation tier. Position in `classes` doubles
// as the tie-break priority for frame labeling: later entries win ties.
struct ClassInventory {
    std::string tier_name;
    std::vector<std::string> classes;
    std::string silence_class;

    ClassInventory() = default;
    ClassInventory(std::string tier, std::vector<std::string> cls,
                   std::string silence)
        : tier_name(std::move(tier)),
          classes(std::move(cls)),
          silence_class(std::move(silence)) {
        std::unordered_set<std::string> seen;
        for (const auto& c : classes)
            if (!seen.insert(c).second)
                throw ValidationError("duplicate class '" + c + "' in tier " +
                                      tier_name);
        if (!contains(silence_class))
            throw ValidationError("silence class '" + silence_class +
                                  "' not in tier " + tier_name);
    }

    bool contains(const std::string& label) const {
        for (const auto& c : classes)
            if (c == label) return true;
        return false;
    }

    int index_of(const std::string& label) const {
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == label) return static_cast<int>(i);
        throw ValidationError("label '" + label + "' not in tier " + tier_name);
    }

    int silence_index() const { return index_of(silence_class); }

    int size() const { return static_cast<int>(classes.size()); }
};

inline ClassInventory adu_inventory() {
    return {"ADU", {"SIL", "VOC", "LAU"}, "SIL"};
}

inline ClassInventory chi_inventory() {
    return {"CHI", {"SIL", "VOC", "VERB", "LAU", "CRY"}, "SIL"};
}

inline ClassInventory babble_inventory() {
    return {"BABBLE", {"JUNK", "NON-CAN", "CAN", "LAU", "CRY"}, "JUNK"};
}

// Generic speech/non-speech tier used by the energy-threshold baselines.
inline ClassInventory voiced_inventory() {
    return {"VAD", {"SIL", "VOICED"}, "SIL"};
}

inline ClassInventory inventory_by_name(const std::string& name) {
    if (name == "ADU") return adu_inventory();
    if (name == "CHI") return chi_inventory();
    if (name == "BABBLE") return babble_inventory();
    if (name == "VAD") return voiced_inventory();
    throw ValidationError("unknown inventory: " + name);
}

}  // namespace sdvc
