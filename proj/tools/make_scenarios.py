#!/usr/bin/env python3
"""Regenerates data/scenarios/{train,test100}.json deterministically."""
import json
import pathlib
import random

TOPICS = {
    1: "You believe you bear no responsibility or fault in the situation, and you want the other person to agree that you are not at fault.",
    2: "You hope the other person will guide you to engage in self-reflection regarding the incident and help you achieve personal growth.",
    3: "You hope the other person will critically analyze the underlying problems in the incident.",
    4: "You hope the other person will deeply empathize with your feelings, rather than simply offering comfort.",
    5: "You want the other person to attentively listen to your emotional outpouring.",
    6: "You want to analyze the reasons behind the actions of other individuals involved in the incident.",
    7: "You hope to receive advice that can genuinely help you overcome your current difficulties.",
    8: "You hope the other person will sincerely praise your specific actions in the situation.",
}

NAMES = ["Lin", "Maya", "Tomas", "Aiko", "Ravi", "Chloe", "Jonas", "Priya", "Wei", "Sofia",
         "Daniel", "Hana", "Omar", "Elena", "Kofi", "Ines"]
JOBS = ["nurse", "graduate student", "line cook", "software tester", "primary school teacher",
        "delivery driver", "junior accountant", "freelance illustrator", "warehouse supervisor",
        "bank teller", "physiotherapist", "call-centre agent"]
HOBBIES = ["running", "baking", "chess", "watercolour painting", "hiking", "video games",
           "gardening", "karaoke", "photography", "board games"]
STYLES = ["speaks in short, guarded sentences", "talks fast and jumps between details",
          "is sarcastic when hurt", "is polite but rarely says what they feel",
          "over-explains and apologises often", "is blunt and impatient"]
EVENTS = [
    "A team project I led was criticised in front of everyone.",
    "My roommate moved out without paying the last month of rent.",
    "I was passed over for a promotion I had worked toward for two years.",
    "My best friend forgot my birthday and posted photos from a party that night.",
    "My parents compared me to my cousin again at a family dinner.",
    "A customer filed a complaint about me that I think was unfair.",
    "I failed the driving test for the second time.",
    "My partner cancelled our trip at the last minute because of work.",
    "A coworker took credit for a report I wrote.",
    "I snapped at my younger brother and he has not spoken to me since.",
    "My landlord is raising the rent and I might have to move.",
    "I stayed late every night this month and my manager still called my work sloppy.",
]
FEELINGS = ["frustrated", "hurt", "exhausted", "embarrassed", "anxious", "angry"]


def scenario(rng, sid, topic, difficulty):
    name = rng.choice(NAMES)
    age = rng.randint(19, 58)
    event = rng.choice(EVENTS)
    return {
        "id": sid,
        "persona": f"{name}, {age}, works as a {rng.choice(JOBS)}. Enjoys {rng.choice(HOBBIES)}. "
                   f"{name} {rng.choice(STYLES)}.",
        "background": f"{event} Since then {name} has felt {rng.choice(FEELINGS)} and keeps replaying it. "
                      f"{name} has not told anyone else the whole story yet.",
        "goal": "Have a heart-to-heart talk about what happened and feel better afterwards.",
        "hidden_intention": TOPICS[topic],
        "topic_id": topic,
        "difficulty": difficulty,
        "initial_emotion": 50,
    }


def main():
    root = pathlib.Path(__file__).resolve().parent.parent / "data" / "scenarios"
    root.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20250601)
    train = [scenario(rng, f"train-{t}-{k}", t, "vanilla") for t in range(1, 9) for k in range(1, 5)]
    counts = {1: 11, 2: 13, 3: 12, 4: 13, 5: 12, 6: 11, 7: 15, 8: 13}
    test = []
    for t, c in counts.items():
        test += [scenario(rng, f"test-{t}-{k:02d}", t, "vanilla") for k in range(1, c + 1)]
    (root / "train.json").write_text(json.dumps(train, indent=2) + "\n")
    (root / "test100.json").write_text(json.dumps(test, indent=2) + "\n")


if __name__ == "__main__":
    main()
