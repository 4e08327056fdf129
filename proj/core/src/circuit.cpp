#include "quilt/circuit.hpp"

#include <sstream>

namespace quilt::circ {

Bundle Bundle::elem(size_t i) const {
    if (!elem_width) throw ValidationError("elem() on non-list bundle");
    Bundle e;
    e.wires.assign(wires.begin() + i * elem_width, wires.begin() + (i + 1) * elem_width);
    return e;
}

Bundle Bundle::slice(size_t lo, size_t n) const {
    if (lo + n > wires.size()) throw ValidationError("bundle slice out of range");
    Bundle e;
    e.wires.assign(wires.begin() + lo, wires.begin() + lo + n);
    return e;
}

std::string Owner::str() const {
    if (kind == Kind::Party) return "party " + std::to_string(index + 1);
    return "solder " + std::to_string(index);
}

Circuit::Counts Circuit::counts() const {
    Counts n;
    for (const Gate& g : gates) {
        switch (g.kind) {
        case GateKind::And: n.and_gates++; break;
        case GateKind::Xor: n.xor_gates++; break;
        case GateKind::Inv: n.inv_gates++; break;
        default: n.const_gates++; break;
        }
    }
    n.total = gates.size();
    n.input_bits = input_bits();
    n.output_bits = output_bits();
    return n;
}

size_t Circuit::and_count() const {
    size_t n = 0;
    for (const Gate& g : gates)
        if (g.kind == GateKind::And) n++;
    return n;
}

size_t Circuit::input_bits() const {
    size_t n = 0;
    for (const InputGroup& g : inputs) n += g.bundle.wires.size();
    return n;
}

size_t Circuit::output_bits() const {
    size_t n = 0;
    for (const Bundle& b : outputs) n += b.wires.size();
    return n;
}

void Circuit::check() const {
    std::vector<uint8_t> defined(wire_count, 0);
    for (const InputGroup& g : inputs) {
        for (Wire w : g.bundle.wires) {
            if (w >= wire_count) throw ValidationError("input wire out of range");
            if (defined[w]) throw ValidationError("wire defined twice: " + std::to_string(w));
            defined[w] = 1;
        }
    }
    for (const Gate& g : gates) {
        if (g.out >= wire_count) throw ValidationError("gate output out of range");
        if (defined[g.out]) throw ValidationError("gate redefines wire " + std::to_string(g.out));
        bool unary = g.kind == GateKind::Inv;
        bool nullary = g.kind == GateKind::Zero || g.kind == GateKind::One;
        if (!nullary) {
            if (g.a >= g.out || !defined[g.a])
                throw ValidationError("gate operand not topologically defined");
            if (!unary && (g.b >= g.out || !defined[g.b]))
                throw ValidationError("gate operand not topologically defined");
        }
        defined[g.out] = 1;
    }
    for (uint32_t w = 0; w < wire_count; w++)
        if (!defined[w]) throw ValidationError("dangling wire " + std::to_string(w));
    auto check_bundle = [&](const Bundle& b) {
        for (Wire w : b.wires)
            if (w >= wire_count) throw ValidationError("bundle wire out of range");
        if (b.elem_width && b.wires.size() % b.elem_width)
            throw ValidationError("list bundle width not a multiple of element width");
    };
    for (const Bundle& b : outputs) check_bundle(b);
    for (Wire w : ver_wires)
        if (w >= wire_count) throw ValidationError("ver wire out of range");
    if (ver_wires.size() != ver_labels.size())
        throw ValidationError("ver label/wire count mismatch");
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

Bundle Builder::input(Owner owner, uint32_t width, uint32_t elem_width, std::string label) {
    Bundle b;
    b.elem_width = elem_width;
    b.label = std::move(label);
    b.wires.resize(width);
    for (uint32_t i = 0; i < width; i++) b.wires[i] = c_.wire_count++;
    c_.inputs.push_back({owner, b});
    return b;
}

Wire Builder::gate(GateKind k, Wire a, Wire b) {
    bool nullary = k == GateKind::Zero || k == GateKind::One;
    if (!nullary && a >= c_.wire_count) throw ValidationError("gate operand a out of range");
    if (k == GateKind::And || k == GateKind::Xor) {
        if (b >= c_.wire_count) throw ValidationError("gate operand b out of range");
    }
    Wire out = c_.wire_count++;
    c_.gates.push_back({k, a, b, out});
    return out;
}

Wire Builder::zero() {
    if (!have_zero_) {
        zero_ = gate(GateKind::Zero);
        have_zero_ = true;
    }
    return zero_;
}

Wire Builder::one() {
    if (!have_one_) {
        one_ = gate(GateKind::One);
        have_one_ = true;
    }
    return one_;
}

Bundle Builder::constant(const Value& v, uint32_t width) {
    if (v.bit_width() > width)
        throw ValidationError("constant wider than bundle: " + v.to_decimal());
    Bundle b;
    b.wires.resize(width);
    for (uint32_t i = 0; i < width; i++) b.wires[i] = v.bit(i) ? one() : zero();
    return b;
}

static void same_width(const Bundle& a, const Bundle& b) {
    if (a.wires.size() != b.wires.size())
        throw ValidationError("bundle width mismatch: " + std::to_string(a.wires.size()) +
                              " vs " + std::to_string(b.wires.size()));
}

Bundle Builder::bxor(const Bundle& a, const Bundle& b) {
    same_width(a, b);
    Bundle r;
    r.elem_width = a.elem_width;
    r.wires.resize(a.wires.size());
    for (size_t i = 0; i < a.wires.size(); i++) r.wires[i] = bxor(a.wires[i], b.wires[i]);
    return r;
}

Bundle Builder::band(const Bundle& a, const Bundle& b) {
    same_width(a, b);
    Bundle r;
    r.elem_width = a.elem_width;
    r.wires.resize(a.wires.size());
    for (size_t i = 0; i < a.wires.size(); i++) r.wires[i] = band(a.wires[i], b.wires[i]);
    return r;
}

Bundle Builder::mask(const Bundle& a, Wire bit) {
    Bundle r;
    r.elem_width = a.elem_width;
    r.wires.resize(a.wires.size());
    for (size_t i = 0; i < a.wires.size(); i++) r.wires[i] = band(a.wires[i], bit);
    return r;
}

Bundle Builder::mux(Wire sel, const Bundle& if1, const Bundle& if0) {
    same_width(if1, if0);
    Bundle r;
    r.elem_width = if1.elem_width;
    r.wires.resize(if1.wires.size());
    for (size_t i = 0; i < r.wires.size(); i++) {
        Wire d = bxor(if1.wires[i], if0.wires[i]);
        r.wires[i] = bxor(if0.wires[i], band(sel, d));
    }
    return r;
}

Bundle Builder::add(const Bundle& a, const Bundle& b) {
    same_width(a, b);
    Bundle r;
    r.wires.resize(a.wires.size());
    Wire carry = zero();
    for (size_t i = 0; i < a.wires.size(); i++) {
        Wire ai = a.wires[i], bi = b.wires[i];
        r.wires[i] = bxor(bxor(ai, bi), carry);
        if (i + 1 < a.wires.size()) // last carry is discarded (wraparound)
            carry = bxor(carry, band(bxor(ai, carry), bxor(bi, carry)));
    }
    return r;
}

Bundle Builder::invert(const Bundle& a) {
    Bundle r;
    r.elem_width = a.elem_width;
    r.wires.resize(a.wires.size());
    for (size_t i = 0; i < a.wires.size(); i++) r.wires[i] = binv(a.wires[i]);
    return r;
}

Wire Builder::eq(const Bundle& a, const Bundle& b) {
    same_width(a, b);
    Wire acc = 0;
    bool first = true;
    for (size_t i = 0; i < a.wires.size(); i++) {
        Wire same = binv(bxor(a.wires[i], b.wires[i]));
        acc = first ? same : band(acc, same);
        first = false;
    }
    return first ? one() : acc;
}

Wire Builder::nonzero(const Bundle& a) {
    if (a.wires.empty()) return zero();
    // OR-fold lowered through De Morgan: any(x) = NOT AND(NOT x_i)
    Wire acc = binv(a.wires[0]);
    for (size_t i = 1; i < a.wires.size(); i++) acc = band(acc, binv(a.wires[i]));
    return binv(acc);
}

Wire Builder::gt(const Bundle& a, const Bundle& b) {
    same_width(a, b);
    // LSB-to-MSB ripple: res becomes a_i at the highest differing bit.
    Wire res = zero();
    for (size_t i = 0; i < a.wires.size(); i++) {
        Wire d = bxor(a.wires[i], b.wires[i]);
        res = bxor(res, band(d, bxor(a.wires[i], res)));
    }
    return res;
}

Wire Builder::ge(const Bundle& a, const Bundle& b) { return binv(gt(b, a)); }

Bundle Builder::concat(const Bundle& a, const Bundle& b) {
    Bundle r = a;
    r.elem_width = 0;
    r.wires.insert(r.wires.end(), b.wires.begin(), b.wires.end());
    return r;
}

void Builder::ver(Wire w, std::string label) {
    c_.ver_wires.push_back(w);
    c_.ver_labels.push_back(std::move(label));
}

std::vector<Bundle> Builder::embed(const Circuit& sub, const std::vector<Bundle>& actuals,
                                   const std::string& ver_prefix) {
    if (actuals.size() != sub.inputs.size())
        throw ValidationError("embed: expected " + std::to_string(sub.inputs.size()) +
                              " input bundles, got " + std::to_string(actuals.size()));
    std::vector<Wire> tr(sub.wire_count, 0);
    std::vector<uint8_t> mapped(sub.wire_count, 0);
    for (size_t g = 0; g < sub.inputs.size(); g++) {
        const Bundle& formal = sub.inputs[g].bundle;
        const Bundle& actual = actuals[g];
        if (formal.wires.size() != actual.wires.size())
            throw ValidationError("embed: input group " + std::to_string(g) + " width mismatch");
        for (size_t i = 0; i < formal.wires.size(); i++) {
            tr[formal.wires[i]] = actual.wires[i];
            mapped[formal.wires[i]] = 1;
        }
    }
    for (const Gate& g : sub.gates) {
        Wire out;
        switch (g.kind) {
        case GateKind::Zero: out = zero(); break;
        case GateKind::One: out = one(); break;
        case GateKind::Inv: out = binv(tr[g.a]); break;
        case GateKind::And: out = band(tr[g.a], tr[g.b]); break;
        default: out = bxor(tr[g.a], tr[g.b]); break;
        }
        tr[g.out] = out;
        mapped[g.out] = 1;
    }
    for (uint32_t w = 0; w < sub.wire_count; w++)
        if (!mapped[w]) throw ValidationError("embed: subcircuit has dangling wire");
    for (size_t i = 0; i < sub.ver_wires.size(); i++)
        ver(tr[sub.ver_wires[i]], ver_prefix + sub.ver_labels[i]);
    std::vector<Bundle> outs;
    outs.reserve(sub.outputs.size());
    for (const Bundle& b : sub.outputs) {
        Bundle nb;
        nb.elem_width = b.elem_width;
        nb.label = b.label;
        nb.wires.resize(b.wires.size());
        for (size_t i = 0; i < b.wires.size(); i++) nb.wires[i] = tr[b.wires[i]];
        outs.push_back(std::move(nb));
    }
    return outs;
}

Circuit Builder::take() {
    Circuit out = std::move(c_);
    c_ = Circuit{};
    have_zero_ = have_one_ = false;
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

void Evaluator::set_input(size_t group, const Bits& bits) {
    if (group >= c_.inputs.size()) throw ValidationError("input group out of range");
    set_bundle(c_.inputs[group].bundle, bits);
}

void Evaluator::set_bundle(const Bundle& b, const Bits& bits) {
    if (bits.size() != b.wires.size())
        throw ValidationError("input bits/bundle width mismatch");
    for (size_t i = 0; i < bits.size(); i++) assign_[b.wires[i]] = bits[i] & 1;
}

void Evaluator::set_value(const Bundle& b, const Value& v) {
    set_bundle(b, v.to_bits(uint32_t(b.wires.size())));
}

void Evaluator::run() {
    uint8_t* a = assign_.data();
    for (const Gate& g : c_.gates) {
        switch (g.kind) {
        case GateKind::And: a[g.out] = a[g.a] & a[g.b]; break;
        case GateKind::Xor: a[g.out] = a[g.a] ^ a[g.b]; break;
        case GateKind::Inv: a[g.out] = a[g.a] ^ 1; break;
        case GateKind::Zero: a[g.out] = 0; break;
        case GateKind::One: a[g.out] = 1; break;
        }
    }
}

Bits Evaluator::get(const Bundle& b) const {
    Bits out(b.wires.size());
    for (size_t i = 0; i < b.wires.size(); i++) out[i] = assign_[b.wires[i]];
    return out;
}

Value Evaluator::value(const Bundle& b) const {
    Bits bits = get(b);
    return Value::from_bits(bits.data(), uint32_t(bits.size()));
}

bool Evaluator::vers_ok() const {
    for (Wire w : c_.ver_wires)
        if (!assign_[w]) return false;
    return true;
}

std::vector<Bits> eval(const Circuit& c, const std::vector<Bits>& group_inputs) {
    if (group_inputs.size() != c.inputs.size())
        throw ValidationError("eval: wrong number of input groups");
    Evaluator ev(c);
    for (size_t g = 0; g < group_inputs.size(); g++) ev.set_input(g, group_inputs[g]);
    ev.run();
    std::vector<Bits> outs;
    outs.reserve(c.outputs.size());
    for (const Bundle& b : c.outputs) outs.push_back(ev.get(b));
    return outs;
}

// ---------------------------------------------------------------------------
// Pruning
// ---------------------------------------------------------------------------

Circuit prune_outputs(const Circuit& c, const std::vector<Bundle>& new_outputs) {
    // Backward reachability from surviving outputs + all ver wires.
    std::vector<int32_t> gate_of(c.wire_count, -1);
    for (size_t i = 0; i < c.gates.size(); i++) gate_of[c.gates[i].out] = int32_t(i);

    std::vector<uint8_t> need(c.wire_count, 0);
    std::vector<Wire> stack;
    auto mark = [&](Wire w) {
        if (!need[w]) {
            need[w] = 1;
            stack.push_back(w);
        }
    };
    for (const Bundle& b : new_outputs)
        for (Wire w : b.wires) mark(w);
    for (Wire w : c.ver_wires) mark(w);
    while (!stack.empty()) {
        Wire w = stack.back();
        stack.pop_back();
        int32_t gi = gate_of[w];
        if (gi < 0) continue; // input wire
        const Gate& g = c.gates[gi];
        if (g.kind == GateKind::Zero || g.kind == GateKind::One) continue;
        mark(g.a);
        if (g.kind != GateKind::Inv) mark(g.b);
    }

    // Inputs are always kept: dropping them would change the unit interface.
    Circuit out;
    out.name = c.name;
    std::vector<Wire> remap(c.wire_count, 0);
    std::vector<uint8_t> kept(c.wire_count, 0);
    for (const InputGroup& g : c.inputs)
        for (Wire w : g.bundle.wires) kept[w] = 1;
    for (const Gate& g : c.gates)
        if (need[g.out]) kept[g.out] = 1;
    for (uint32_t w = 0; w < c.wire_count; w++)
        if (kept[w]) remap[w] = out.wire_count++;

    auto remap_bundle = [&](const Bundle& b) {
        Bundle nb;
        nb.elem_width = b.elem_width;
        nb.label = b.label;
        nb.wires.resize(b.wires.size());
        for (size_t i = 0; i < b.wires.size(); i++) nb.wires[i] = remap[b.wires[i]];
        return nb;
    };
    for (const InputGroup& g : c.inputs) out.inputs.push_back({g.owner, remap_bundle(g.bundle)});
    for (const Gate& g : c.gates) {
        if (!need[g.out]) continue;
        Gate ng = g;
        ng.out = remap[g.out];
        if (g.kind != GateKind::Zero && g.kind != GateKind::One) {
            ng.a = remap[g.a];
            if (g.kind != GateKind::Inv) ng.b = remap[g.b];
        }
        out.gates.push_back(ng);
    }
    for (const Bundle& b : new_outputs) out.outputs.push_back(remap_bundle(b));
    for (size_t i = 0; i < c.ver_wires.size(); i++) {
        out.ver_wires.push_back(remap[c.ver_wires[i]]);
        out.ver_labels.push_back(c.ver_labels[i]);
    }
    out.check();
    return out;
}

// ---------------------------------------------------------------------------
// Text dump / parse
// ---------------------------------------------------------------------------

static const char* kind_name(GateKind k) {
    switch (k) {
    case GateKind::And: return "AND";
    case GateKind::Xor: return "XOR";
    case GateKind::Inv: return "INV";
    case GateKind::Zero: return "CONST0";
    default: return "CONST1";
    }
}

std::string Circuit::dump() const {
    std::ostringstream os;
    os << "circuit " << (name.empty() ? "unnamed" : name) << "\n";
    os << "wires " << wire_count << "\n";
    auto emit_wires = [&](const Bundle& b) {
        for (Wire w : b.wires) os << " " << w;
        os << "\n";
    };
    for (const InputGroup& g : inputs) {
        os << "input " << (g.owner.kind == Owner::Kind::Party ? "party" : "solder") << " "
           << (g.owner.kind == Owner::Kind::Party ? g.owner.index + 1 : g.owner.index) << " elem "
           << g.bundle.elem_width;
        emit_wires(g.bundle);
    }
    for (const Bundle& b : outputs) {
        os << "output elem " << b.elem_width;
        emit_wires(b);
    }
    for (size_t i = 0; i < ver_wires.size(); i++)
        os << "ver " << (ver_labels[i].empty() ? "-" : ver_labels[i]) << " " << ver_wires[i]
           << "\n";
    os << "gates " << gates.size() << "\n";
    for (const Gate& g : gates) {
        os << g.out << " " << kind_name(g.kind);
        if (g.kind == GateKind::And || g.kind == GateKind::Xor)
            os << " " << g.a << " " << g.b;
        else if (g.kind == GateKind::Inv)
            os << " " << g.a;
        os << "\n";
    }
    return os.str();
}

Circuit Circuit::parse(const std::string& text) {
    Circuit c;
    std::istringstream is(text);
    std::string line;
    auto fail = [&](const std::string& why) { throw ParseError("circuit parse: " + why); };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "circuit") {
            ls >> c.name;
        } else if (tok == "wires") {
            ls >> c.wire_count;
        } else if (tok == "input" || tok == "output") {
            Bundle b;
            Owner owner;
            if (tok == "input") {
                std::string okind;
                int idx;
                ls >> okind >> idx;
                if (okind == "party")
                    owner = Owner::party(idx - 1);
                else if (okind == "solder")
                    owner = Owner::solder(idx);
                else
                    fail("bad input owner " + okind);
            }
            std::string elemtok;
            ls >> elemtok >> b.elem_width;
            if (elemtok != "elem") fail("expected 'elem'");
            Wire w;
            while (ls >> w) b.wires.push_back(w);
            if (tok == "input")
                c.inputs.push_back({owner, b});
            else
                c.outputs.push_back(b);
        } else if (tok == "ver") {
            std::string label;
            Wire w;
            ls >> label >> w;
            c.ver_wires.push_back(w);
            c.ver_labels.push_back(label == "-" ? "" : label);
        } else if (tok == "gates") {
            // count line; gates follow
        } else {
            Gate g{};
            g.out = Wire(std::stoul(tok));
            std::string kind;
            ls >> kind;
            if (kind == "AND" || kind == "XOR") {
                g.kind = kind == "AND" ? GateKind::And : GateKind::Xor;
                if (!(ls >> g.a >> g.b)) fail("binary gate needs two operands");
            } else if (kind == "INV") {
                g.kind = GateKind::Inv;
                if (!(ls >> g.a)) fail("INV needs one operand");
            } else if (kind == "CONST0") {
                g.kind = GateKind::Zero;
            } else if (kind == "CONST1") {
                g.kind = GateKind::One;
            } else {
                fail("unknown gate kind " + kind);
            }
            c.gates.push_back(g);
        }
    }
    c.check();
    return c;
}

} // namespace quilt::circ
