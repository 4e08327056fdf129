#pragma once
// Boolean circuit IR. Gates are AND/XOR/INV plus constants; OR and all
// arithmetic are lowered at build time (the garbling cost model only prices
// AND gates, so keeping the gate set minimal keeps |C| honest). Wire ids are
// dense and topological: a gate's output id is strictly greater than its
// operand ids, which lets evaluation be a single forward sweep.

#include "quilt/common.hpp"

#include <string>
#include <vector>

namespace quilt::circ {

enum class GateKind : uint8_t { And, Xor, Inv, Zero, One };

struct Gate {
    GateKind kind;
    Wire a = 0, b = 0; // b unused for Inv/consts
    Wire out = 0;
};

// A bundle is an ordered wire list. elem_width > 0 marks a list of
// fixed-width elements (rows/values); 0 means an atomic scalar/row bundle.
struct Bundle {
    std::vector<Wire> wires;
    uint32_t elem_width = 0;
    std::string label;

    uint32_t width() const { return uint32_t(wires.size()); }
    size_t elems() const { return elem_width ? wires.size() / elem_width : (wires.empty() ? 0 : 1); }
    // Wires of element i (requires elem_width > 0).
    Bundle elem(size_t i) const;
    Bundle slice(size_t lo, size_t n) const; // bit range [lo, lo+n)
};

// Who supplies an input group: a concrete party, or a solder edge (the output
// of a child unit, stitched in at run time). `index` is the party id or the
// child-edge slot.
struct Owner {
    enum class Kind : uint8_t { Party, Solder } kind = Kind::Party;
    int index = 0;

    static Owner party(int p) { return {Kind::Party, p}; }
    static Owner solder(int slot) { return {Kind::Solder, slot}; }
    bool operator==(const Owner&) const = default;
    std::string str() const;
};

struct InputGroup {
    Owner owner;
    Bundle bundle;
};

class Circuit {
public:
    std::string name;
    uint32_t wire_count = 0;
    std::vector<Gate> gates; // topological
    std::vector<InputGroup> inputs;
    std::vector<Bundle> outputs;
    std::vector<Wire> ver_wires; // single-bit checks; 0 at runtime = abort
    std::vector<std::string> ver_labels;

    struct Counts {
        size_t and_gates = 0, xor_gates = 0, inv_gates = 0, const_gates = 0;
        size_t total = 0, input_bits = 0, output_bits = 0;
    };
    Counts counts() const;
    size_t and_count() const;
    size_t input_bits() const;
    size_t output_bits() const;

    // Structural invariants: dense wire ids, topological gate order, every
    // wire defined exactly once (input or gate output). Throws ValidationError.
    void check() const;

    std::string dump() const; // line-oriented text; parse() round-trips
    static Circuit parse(const std::string& text);
};

// ---------------------------------------------------------------------------
// Builder. Primitive constructions use the bundle-level helpers; everything
// bottoms out in gate()/input().
// ---------------------------------------------------------------------------

class Builder {
public:
    explicit Builder(std::string name = "") { c_.name = std::move(name); }

    Bundle input(Owner owner, uint32_t width, uint32_t elem_width = 0, std::string label = "");

    Wire gate(GateKind k, Wire a = 0, Wire b = 0);
    Wire band(Wire a, Wire b) { return gate(GateKind::And, a, b); }
    Wire bxor(Wire a, Wire b) { return gate(GateKind::Xor, a, b); }
    Wire binv(Wire a) { return gate(GateKind::Inv, a); }
    Wire bor(Wire a, Wire b) { return binv(band(binv(a), binv(b))); } // OR lowering
    Wire zero();
    Wire one();

    // --- bundle helpers (widths must match; throws ValidationError) ---
    Bundle constant(const Value& v, uint32_t width);
    Bundle bxor(const Bundle& a, const Bundle& b);
    Bundle band(const Bundle& a, const Bundle& b);
    Bundle mask(const Bundle& a, Wire bit);                       // a AND bit (each wire)
    Bundle mux(Wire sel, const Bundle& if1, const Bundle& if0);   // sel ? if1 : if0
    Bundle add(const Bundle& a, const Bundle& b);                 // ripple add, wraps
    Bundle invert(const Bundle& a);                               // bitwise NOT
    Wire eq(const Bundle& a, const Bundle& b);
    Wire nonzero(const Bundle& a);
    Wire gt(const Bundle& a, const Bundle& b); // unsigned a > b, LSB-first bundles
    Wire ge(const Bundle& a, const Bundle& b);
    static Bundle concat(const Bundle& a, const Bundle& b);

    void output(Bundle b) { c_.outputs.push_back(std::move(b)); }
    void ver(Wire w, std::string label);

    // Inline `sub` into this circuit: actual bundles replace sub's input
    // groups (in order, width-checked); sub's ver wires are re-registered with
    // ver_prefix prepended. Returns sub's outputs remapped to this circuit.
    std::vector<Bundle> embed(const Circuit& sub, const std::vector<Bundle>& actuals,
                              const std::string& ver_prefix = "");

    uint32_t wires() const { return c_.wire_count; }
    Circuit take();

private:
    Circuit c_;
    Wire zero_ = 0, one_ = 0; // cached const wires (0 = not yet made)
    bool have_zero_ = false, have_one_ = false;
};

// ---------------------------------------------------------------------------
// Plaintext evaluation: forward sweep over gates. The evaluator owns a
// reusable assignment buffer (1 byte per wire) so tight test loops don't
// reallocate.
// ---------------------------------------------------------------------------

using Bits = std::vector<uint8_t>;

class Evaluator {
public:
    explicit Evaluator(const Circuit& c) : c_(c), assign_(c.wire_count, 0) {}

    void set_input(size_t group, const Bits& bits);
    void set_bundle(const Bundle& b, const Bits& bits);
    void set_value(const Bundle& b, const Value& v);
    void run();

    uint8_t bit(Wire w) const { return assign_[w]; }
    Bits get(const Bundle& b) const;
    Value value(const Bundle& b) const;
    bool vers_ok() const;
    const Bits& assignment() const { return assign_; }
    Bits& assignment() { return assign_; }

private:
    const Circuit& c_;
    Bits assign_;
};

// One-shot convenience: inputs per group, returns output bundle bit vectors.
std::vector<Bits> eval(const Circuit& c, const std::vector<Bits>& group_inputs);

// Dead-gate elimination after replacing the output list (used by prune-to-l).
// Inputs and ver wires are always preserved; gates not feeding any surviving
// output or ver wire are dropped and wires renumbered.
Circuit prune_outputs(const Circuit& c, const std::vector<Bundle>& new_outputs);

} // namespace quilt::circ
