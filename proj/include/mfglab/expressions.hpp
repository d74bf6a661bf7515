#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "mfglab/errors.hpp"
#include "mfglab/grid.hpp"

namespace mfglab {

/// Closed-form field grammar for config files: sums of constants and
/// c*cos(2*pi*k*x) / c*sin(2*pi*k*y) terms. The wave number k is an optional
/// positive integer (default 1) and the variable picks the axis. Anything
/// outside this grammar is rejected with the offending position, which keeps
/// run configs reproducible and trivially hashable.

struct FieldTerm {
    enum class Kind { constant, cosine, sine };
    Kind kind = Kind::constant;
    double amplitude = 0.0;
    int wave = 1;
    int axis = 0;
};

class FieldExpression {
  public:
    static FieldExpression parse(const std::string& text) {
        FieldExpression e;
        e.source_ = text;
        std::size_t pos = 0;
        skip_space(text, pos);
        if (pos >= text.size()) throw ConfigError("empty field expression");
        bool first = true;
        while (pos < text.size()) {
            double sign = 1.0;
            skip_space(text, pos);
            if (!first) {
                if (text[pos] == '+') {
                    ++pos;
                } else if (text[pos] == '-') {
                    sign = -1.0;
                    ++pos;
                } else {
                    fail(text, pos, "expected '+' or '-' between terms");
                }
                skip_space(text, pos);
            }
            e.terms_.push_back(parse_term(text, pos, sign));
            first = false;
            skip_space(text, pos);
        }
        return e;
    }

    ScalarField evaluate(const PeriodicGrid& grid) const {
        ScalarField out(grid);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto p = grid.point(i);
            double s = 0.0;
            for (const FieldTerm& t : terms_) {
                switch (t.kind) {
                    case FieldTerm::Kind::constant: s += t.amplitude; break;
                    case FieldTerm::Kind::cosine:
                        s += t.amplitude * std::cos(2.0 * pi * t.wave * p[static_cast<std::size_t>(t.axis)]);
                        break;
                    case FieldTerm::Kind::sine:
                        s += t.amplitude * std::sin(2.0 * pi * t.wave * p[static_cast<std::size_t>(t.axis)]);
                        break;
                }
            }
            out.v[i] = s;
        }
        return out;
    }

    const std::vector<FieldTerm>& terms() const { return terms_; }
    const std::string& source() const { return source_; }

  private:
    std::vector<FieldTerm> terms_;
    std::string source_;

    static void skip_space(const std::string& s, std::size_t& pos) {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    [[noreturn]] static void fail(const std::string& s, std::size_t pos, const std::string& what) {
        throw ConfigError("field expression error at position " + std::to_string(pos) + ": " +
                          what + " (in \"" + s + "\")");
    }

    static bool starts_trig(const std::string& s, std::size_t pos) {
        return s.compare(pos, 4, "cos(") == 0 || s.compare(pos, 4, "sin(") == 0;
    }

    static FieldTerm parse_term(const std::string& s, std::size_t& pos, double sign) {
        FieldTerm t;
        skip_space(s, pos);
        if (pos >= s.size()) fail(s, pos, "expected a term");
        if (starts_trig(s, pos)) {
            t.amplitude = sign;
            parse_trig(s, pos, t);
            return t;
        }
        const char* begin = s.c_str() + pos;
        char* end = nullptr;
        const double value = std::strtod(begin, &end);
        if (end == begin) fail(s, pos, "expected a number or cos/sin");
        pos += static_cast<std::size_t>(end - begin);
        t.amplitude = sign * value;
        skip_space(s, pos);
        if (pos < s.size() && s[pos] == '*') {
            ++pos;
            skip_space(s, pos);
            if (!starts_trig(s, pos)) fail(s, pos, "expected cos( or sin( after '*'");
            parse_trig(s, pos, t);
        } else {
            t.kind = FieldTerm::Kind::constant;
        }
        return t;
    }

    static void expect(const std::string& s, std::size_t& pos, const std::string& token) {
        skip_space(s, pos);
        if (s.compare(pos, token.size(), token) != 0) fail(s, pos, "expected '" + token + "'");
        pos += token.size();
    }

    static void parse_trig(const std::string& s, std::size_t& pos, FieldTerm& t) {
        if (s.compare(pos, 4, "cos(") == 0) {
            t.kind = FieldTerm::Kind::cosine;
        } else {
            t.kind = FieldTerm::Kind::sine;
        }
        pos += 4;
        expect(s, pos, "2");
        expect(s, pos, "*");
        expect(s, pos, "pi");
        expect(s, pos, "*");
        skip_space(s, pos);
        if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            std::size_t digits = 0;
            long k = std::stol(s.substr(pos), &digits);
            if (k < 1) fail(s, pos, "wave number must be a positive integer");
            t.wave = static_cast<int>(k);
            pos += digits;
            expect(s, pos, "*");
        } else {
            t.wave = 1;
        }
        skip_space(s, pos);
        if (pos >= s.size() || (s[pos] != 'x' && s[pos] != 'y'))
            fail(s, pos, "expected axis variable x or y");
        t.axis = s[pos] == 'x' ? 0 : 1;
        ++pos;
        expect(s, pos, ")");
    }
};

} // namespace mfglab
