"""Regenerates mini8.txt, a synthetic 8-class corpus in the one-document-per-line
format (label first, then pre-stemmed tokens). Class sizes are skewed the way
newswire topic collections usually are."""

import random

SIZES = {
    "earn": 200, "acq": 120, "crude": 40, "trade": 35,
    "money-fx": 30, "interest": 28, "ship": 17, "grain": 10,
}
TOPIC = {
    "earn": "net shr profit qtr dividend rev loss oper payout split record quarterli",
    "acq": "acquir merger stake sharehold tender offer bid takeov buy unit complet agre",
    "crude": "oil barrel opec crude price product refineri petroleum bpd energi field",
    "trade": "trade deficit tariff export import surplu protection japan billion impos",
    "money-fx": "dollar currenc yen exchang central intervent monetari mark stabil rate",
    "interest": "rate prime lend cut point discount fed percent basi money rais",
    "ship": "ship vessel port tanker cargo strike gulf freight seamen canal",
    "grain": "wheat grain corn tonn agricultur crop export usda harvest soybean",
}
COMMON = ("said year compani would also new market share pct mln dlr inc corp "
          "month week report expect month last first two three offici govern "
          "industri group analyst increas lower higher term plan statement").split()


def doc(rng, label):
    own = TOPIC[label].split()
    others = [w for l, t in TOPIC.items() if l != label for w in t.split()]
    n = rng.randint(12, 90)
    words = []
    for _ in range(n):
        r = rng.random()
        if r < 0.16:
            # Zipf-like preference for the first topic words
            words.append(own[min(int(rng.expovariate(0.35)), len(own) - 1)])
        elif r < 0.40:
            words.append(rng.choice(others))
        else:
            words.append(COMMON[min(int(rng.expovariate(0.12)), len(COMMON) - 1)])
    return " ".join(words)


def main():
    rng = random.Random(20140807)
    rows = [(label, doc(rng, label)) for label, n in SIZES.items() for _ in range(n)]
    rng.shuffle(rows)
    with open("mini8.txt", "w") as f:
        for label, text in rows:
            f.write(f"{label}\t{text}\n")


if __name__ == "__main__":
    main()
