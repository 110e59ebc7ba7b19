#!/usr/bin/env python3
"""Regenerates the fixture corpora under fixtures/.

Run from anywhere: python3 fixtures/make_fixtures.py
Needs Pillow for the tiny case images.
"""

import json
import pathlib

from PIL import Image

ROOT = pathlib.Path(__file__).resolve().parent


def dump(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def dump_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")


def tiny_image(path, color, fmt):
    path.parent.mkdir(parents=True, exist_ok=True)
    img = Image.new("RGB", (8, 8), color)
    for x in range(8):
        img.putpixel((x, x), (255 - color[0], 255 - color[1], 255 - color[2]))
    if fmt == "JPEG":
        img.save(path, fmt, quality=90)
    else:
        img.save(path, fmt)


# ---------------------------------------------------------------- synthetic10

def specialist_reply(own, others):
    lines = ["EVIDENCE:", f"The distribution, colour and history fit {own} well."]
    for o in others:
        lines.append(f"CRITIQUE {o}:")
        lines.append(f"{o} would usually look different from what is described here.")
    return "\n".join(lines)


def final_reply(name):
    return f"The evidence is settled.\nFINAL_DIAGNOSIS: {name}\nTERMINATE"


def revise_reply(target):
    return f"The compiled evidence leaves a gap.\nREVISE: {target}\nPlease address the critiques in more detail."


# Each case: retrieval list, MAC plan, texts. "admin" lists the non-forced
# admin replies in order; "forced" is the reply to the forced-finalize turn.
CASES = [
    dict(id="s01", gt="psoriasis", query="Silvery scaly plaques on both elbows for two years.",
         retrieved=["Psoriasis", "Seborrheic dermatitis", "Tinea corporis"],
         admin=[final_reply("psoriasis")]),
    dict(id="s02", gt="chronic eczema", query="Itchy dry patches on the hands that keep coming back.",
         retrieved=["Allergic contact dermatitis", "Chronic eczema", "Psoriasis", "Tinea manuum"],
         admin=[revise_reply("Specialist_2"), final_reply("chronic eczema")],
         refine={"Specialist_2": ["ENHANCED EVIDENCE:\nRecurrent itch and dryness over years favour chronic eczema."]}),
    dict(id="s03", gt="acne vulgaris", query="Red bumps and blackheads on the face since I was fifteen.",
         retrieved=["Acne vulgaris", "Rosacea", "Folliculitis", "Perioral dermatitis", "Milia"],
         admin=[final_reply("acne vulgaris")], incomplete_first=True),
    dict(id="s04", gt="urticaria", query="Raised itchy welts that move around within hours.",
         retrieved=["Urticaria", "Insect bites", "Erythema multiforme", "Contact dermatitis",
                    "Drug eruption", "Mastocytosis", "Dermatographism"],
         admin=[final_reply("urticaria")]),
    dict(id="s05", gt="tinea pedis", query="Peeling skin between the toes, smells bad.",
         retrieved=["Dyshidrotic eczema", "Tinea pedis", "Pitted keratolysis"],
         admin=[final_reply("dyshidrotic eczema")], observation=""),
    dict(id="s06", gt="vitiligo", query="White patches spreading around the mouth and hands.",
         retrieved=["Vitiligo", "Pityriasis alba", "Tinea versicolor", "Post-inflammatory hypopigmentation"],
         admin=[final_reply("vitiligo")], coordinator=""),
    dict(id="s07", gt="lichen planus", query="Purple flat itchy bumps on the wrists.",
         retrieved=["Lichen planus", "Psoriasis", "Lichenoid drug eruption"],
         admin=[revise_reply("Specialist_1"), revise_reply("Specialist_3")],
         forced=final_reply("lichen planus"),
         refine={"Specialist_1": ["ENHANCED EVIDENCE:\nWickham striae and wrist location point to lichen planus."],
                 "Specialist_3": ["ENHANCED EVIDENCE:\nNo new drug was started, which weakens a drug eruption."]}),
    dict(id="s08", gt="rosacea", query="Flushing and small pustules on the cheeks, worse with wine.",
         retrieved=["Perioral dermatitis", "Rosacea", "Acne vulgaris"],
         admin=[final_reply("perioral dermatitis")]),
    dict(id="s09", gt=None, query="A rough spot on my scalp that bleeds sometimes.",
         retrieved=["Actinic keratosis", "Seborrheic keratosis", "Basal cell carcinoma"],
         admin=[final_reply("actinic keratosis")]),
    dict(id="s10", gt="molluscum contagiosum", query="Small pearly bumps with a dimple on my child's belly.",
         retrieved=["Common warts", "Milia", "Folliculitis"],
         admin=[final_reply("common warts")]),
]

REFERENCES = {
    "s01": "This is psoriasis. Use a topical steroid and keep the skin moisturized.",
    "s02": "Chronic eczema. Moisturize often and use a steroid cream for flares.",
    "s03": "Acne. Start a gentle retinoid at night.",
    "s04": "Hives, urticaria. Take a non-sedating antihistamine daily.",
    "s05": "Athlete's foot, tinea pedis. Use an antifungal cream for two weeks.",
    "s06": "Looks like vitiligo. See a dermatologist for light therapy.",
    "s07": "Lichen planus. A potent steroid cream should help the itch.",
    "s08": "Rosacea. Avoid triggers and use metronidazole gel.",
    "s09": None,
    "s10": "Molluscum contagiosum. It clears on its own in months.",
}


def synthetic10():
    base = ROOT / "synthetic10"
    colors = [(200, 120, 110), (180, 90, 90), (210, 150, 140), (230, 160, 150), (190, 140, 120),
              (240, 230, 220), (150, 90, 140), (220, 110, 110), (170, 150, 130), (235, 205, 200)]
    rows, entries = [], []
    expected = dict(cases=len(CASES), total_known_gt=0, retrieved_gt=0, top1_hits=0, top2_hits=0)
    calls = 0
    for i, c in enumerate(CASES):
        cid = c["id"]
        fmt = "PNG" if i % 2 == 0 else "JPEG"
        rel = f"images/{cid}.{'png' if fmt == 'PNG' else 'jpg'}"
        tiny_image(base / rel, colors[i], fmt)
        rows.append(dict(case_id=cid, query=c["query"], image_paths=[rel], ground_truth=c["gt"],
                         split="validation", reference_response=REFERENCES[cid]))

        retrieved = [r.lower() for r in c["retrieved"]]
        debate = retrieved[:5]
        n = len(debate)
        names = [f"Specialist_{k + 1}" for k in range(n)]

        def add(stage, responses, contains=None):
            nonlocal calls
            e = dict(case_id=cid, stage=stage)
            if contains is not None:
                e["contains"] = contains
            e["responses"] = responses
            entries.append(e)
            calls += len(responses)

        listing = "\n".join(f"{k + 1}. {name}" for k, name in enumerate(c["retrieved"]))
        add("retrieval", [f"Weighing the history and the images, the likely conditions are:\n{listing}\n\n"
                          f"```json\n{json.dumps(c['retrieved'])}\n```"])
        add("mac", [c.get("observation", f"Well demarcated lesions; case {cid} shows the typical pattern.")],
            "Visual Inspection Guidelines")
        for k, own in enumerate(debate):
            others = [o for o in debate if o != own]
            replies = [specialist_reply(own, others)]
            if k == 0 and c.get("incomplete_first"):
                replies.insert(0, specialist_reply(own, others[:-1]))
            add("mac", replies, f"You are {names[k]}. Your assigned disease")
        add("mac", [c.get("coordinator", f"Compiled findings for {n} probable diseases.")],
            "All specialists have reported")
        add("mac", c["admin"], "As the Admin, evaluate the compiled evidence")
        if "forced" in c:
            add("mac", [c["forced"]], "The revision limit has been reached")
        for who, replies in c.get("refine", {}).items():
            add("mac", replies, f"You are {who}. The Admin asked you to refine")

        final = (c.get("forced") or c["admin"][-1]).split("FINAL_DIAGNOSIS: ")[1].split("\n")[0]
        ranking = [final] + [d for d in debate if d != final]
        add("align", [f"The likely condition is {final}. Follow the usual treatment and review in four weeks."],
            "most probable diagnosis for this case is")
        add("align", [f"{final.capitalize()}. Treat as usual and review in four weeks."], "Response to rewrite:")

        if c["gt"] is not None:
            expected["total_known_gt"] += 1
            expected["retrieved_gt"] += c["gt"] in retrieved
            expected["top1_hits"] += ranking[0] == c["gt"]
            expected["top2_hits"] += c["gt"] in ranking[:2]

    expected["llm_calls"] = calls
    dump_jsonl(base / "dataset.jsonl", rows)
    dump(base / "script.json", dict(entries=entries))
    dump(base / "expected.json", expected)
    dump(base / "config.json", dict(dataset="dataset.jsonl", retrieval_strategy="expert_cot",
                                    rerank_strategy="mac", max_candidates=10, seed=7, max_concurrency=4,
                                    judge_mode="exact"))


# ------------------------------------------------------------------ apo_toy

PAIRS = [
    dict(case_id="p1",
         draft="Based on the images, it appears that the most likely condition is psoriasis. I would suggest "
               "applying a topical corticosteroid twice daily and using an emollient to keep the skin hydrated.",
         reference="Psoriasis. Use a steroid cream twice a day and moisturize."),
    dict(case_id="p2",
         draft="After reviewing the description, the findings are consistent with tinea corporis, a fungal "
               "infection. An over the counter antifungal cream applied for two to four weeks is recommended.",
         reference="Ringworm, tinea corporis. Apply an antifungal cream for two weeks."),
    dict(case_id="p3",
         draft="The presentation is most suggestive of acne vulgaris. A regimen including benzoyl peroxide "
               "wash and a topical retinoid at night would be an appropriate first step.",
         reference="Acne. Use benzoyl peroxide wash and a retinoid at night."),
    dict(case_id="p4",
         draft="Considering the symptoms described, this may be urticaria. Taking a non-sedating antihistamine "
               "daily and avoiding known triggers is generally advised.",
         reference="Hives. Take an antihistamine daily and avoid triggers."),
    dict(case_id="p5",
         draft="The image and history point toward seborrheic dermatitis. A medicated shampoo containing "
               "ketoconazole used two to three times weekly is usually effective.",
         reference="Seborrheic dermatitis. Use ketoconazole shampoo three times a week."),
]

# Rewrites under the bundled rules stay close to the draft; under the learned
# rules they move toward the dermatologist's wording.
BUNDLED_REWRITES = {
    "p1": "The most likely condition is psoriasis. I suggest applying a topical corticosteroid twice daily "
          "with an emollient.",
    "p2": "This is consistent with tinea corporis, a fungal infection. An antifungal cream for two to four "
          "weeks is recommended.",
    "p3": "This is most suggestive of acne vulgaris. Benzoyl peroxide wash and a topical retinoid at night "
          "is a good first step.",
    "p4": "This may be urticaria. A non-sedating antihistamine daily and avoiding triggers is advised.",
    "p5": "This points toward seborrheic dermatitis. Ketoconazole shampoo two to three times weekly is "
          "usually effective.",
}
LEARNED_REWRITES = {
    "p1": "Psoriasis. Use a steroid cream twice a day and keep it moisturized.",
    "p2": "Tinea corporis, ringworm. Apply an antifungal cream for two weeks.",
    "p3": "Acne. Use a benzoyl peroxide wash and a retinoid at night.",
    "p4": "Hives. Take an antihistamine daily and avoid your triggers.",
    "p5": "Seborrheic dermatitis. Use ketoconazole shampoo three times a week.",
}
LEARNED_RULES = [
    dict(title="Lead With The Name",
         example="Psoriasis. Use a steroid cream.",
         explanation="Open with the condition name alone, then the treatment in one short sentence."),
    dict(title="Plain Words",
         example="Use a steroid cream twice a day.",
         explanation="Prefer everyday words over clinical phrasing."),
]


def apo_toy():
    base = ROOT / "apo_toy"
    dump_jsonl(base / "pairs.jsonl", PAIRS)
    entries = []
    for p in PAIRS:
        cid = p["case_id"]
        entries.append(dict(case_id=cid, stage="align", contains="Lead With The Name",
                            responses=[LEARNED_REWRITES[cid]], repeat=True))
        entries.append(dict(case_id=cid, stage="align", responses=[BUNDLED_REWRITES[cid]], repeat=True))
    critic = ("The rewrites are still long. Replace the rules with these.\n\n```json\n"
              + json.dumps(dict(rules=LEARNED_RULES), indent=2) + "\n```")
    entries.append(dict(case_id="apo", stage="apo", responses=[critic], repeat=True))
    dump(base / "script.json", dict(entries=entries))


# ------------------------------------------------------------- mac_appendix

APPENDIX_OBSERVATION = (
    "The skin condition, as shown in the images, presents widespread erythematous patches with violaceous "
    "hues across the leg. The patient has multiple crusted plaques and erosions, with sizes varying from a "
    "few millimeters to several centimeters. Some lesions have a serpiginous border, suggesting an active "
    "edge. The skin's texture looks lichenified in some places, indicating chronicity, and scaling is evident "
    "across various regions, signaling some level of dryness and exfoliation. Some patches have merged, "
    "forming a larger area of affected skin. Signs of excoriations are present, most likely due to itching, "
    "and scattered pustules can also be observed.")
APPENDIX_QUERY = ("Please help take a look, what kind of skin disease is this? Suffering from the disease for "
                  "more than 10 years.  It is recurrent and is very itchy!  It happens wherever I scratch in "
                  "some places.")
APPENDIX_CANDIDATES = ["prurigo nodularis", "chronic eczema", "psoriasis", "lichen simplex chronicus",
                       "allergic or irritant contact dermatitis"]
APPENDIX_NAMES = ["Rick", "Sam", "Emma", "Olivia", "Michael"]

RICK = """As Diagnostic Specialist Rick,

Assigned Diagnosis: Prurigo Nodularis.

Supporting Evidence for Prurigo Nodularis: The indications of chronic scratching or rubbing like lichenification suggest that the rash could be Prurigo Nodularis. The patient's description of the condition as being very itchy and recurrent over a span of more than a decade also aligns with this diagnosis. In addition, the presence of scattered pustules can also be seen in cases of Prurigo Nodularis.

Critiques for Other Diseases:
1. **Chronic Eczema**: This condition also presents an itchy rash that can become lichenified from chronic scratching, but usually has a more defined pattern of eruption that is not described here.
2. **Psoriasis**: While this condition presents chronic plaques, they usually exhibit a characteristic silvery scale. No such description is provided here.
3. **Lichen Simplex Chronicus**: While this condition is characterized by lichenification, it generally affects a specific region rather than having a widespread distribution as described here.
4. **Allergic or Irritant Contact Dermatitis**: These conditions generally present rapidly after contact with an offending substance, which does not fit the chronic, decade-long presentation described here.

**CALL COORDINATOR** to validate completion."""

# Sam, Emma, Olivia and Michael answer in the marker format.
OTHER_SPECIALISTS = {
    "Sam": ("chronic eczema",
            "Widespread, merging erythematous patches with lichenification and itch wherever the patient "
            "scratches, recurring for more than ten years.",
            {"prurigo nodularis": "No firm nodules are described.",
             "psoriasis": "The silvery scale of psoriasis is missing.",
             "lichen simplex chronicus": "The involvement is widespread rather than a single plaque.",
             "allergic or irritant contact dermatitis": "No exposure or acute flare is reported."}),
    "Emma": ("psoriasis",
             "Plaques with scaling over a wide area and a chronic relapsing course.",
             {"prurigo nodularis": "Itch in prurigo is tied to discrete nodules, which are absent.",
              "chronic eczema": "Weeping and oozing are not described.",
              "lichen simplex chronicus": "That condition stays localized.",
              "allergic or irritant contact dermatitis": "There is no trigger history."}),
    "Olivia": ("lichen simplex chronicus",
               "Lichenified skin from years of rubbing, intense itch and a serpiginous border.",
               {"prurigo nodularis": "The affected area is larger than prurigo usually covers.",
                "chronic eczema": "Crusting and oozing are limited.",
                "psoriasis": "No silvery scale.",
                "allergic or irritant contact dermatitis": "Contact dermatitis is acute after exposure."}),
    "Michael": ("allergic or irritant contact dermatitis",
                "Dryness, exfoliation and itch could follow repeated contact with an irritant.",
                {"prurigo nodularis": "Nodules typical of prurigo are not described.",
                 "chronic eczema": "There is not enough weeping or crusting.",
                 "psoriasis": "No silvery scaly plaques.",
                 "lichen simplex chronicus": "It is usually localized."}),
}

CONSOLIDATION = """Thank you for your findings, Michael.

As the Coordinator, I acknowledge the completion of Michael's analysis regarding 'allergic or irritant contact dermatitis'.

**Compiling Findings**

I'll now compile and categorize the generated evidences and critiques for each potential disease:
1. **Prurigo Nodularis**
- Supporting Evidence: Chronic scratching or rubbing and recurrent itchiness over a decade. Presence of scattered pustules.
- Consolidated Critiques: More defined pattern of eruption for Chronic Eczema is missing. No silver scales as in Psoriasis. More localized presentation expected as in Lichen Simplex Chronicus. No acute flare-ups post exposure as in Contact Dermatitis.
2. **Chronic Eczema**
- Supporting Evidence: Widespread and merging erythematous patches, lichenified skin at some regions and itchiness wherever scratched.
- Consolidated Critiques: Prurigo Nodularis typically presents hard, itchy lumps. Silvery scales typical to Psoriasis missing. Lichen Simplex Chronicus is usually localized.
3. **Psoriasis**
- Supporting Evidence: Widespread plaques, lichenified skin and scaling.
- Consolidated Critiques: In Prurigo Nodularis itching is more generalized. No typical eczema characteristics like weeping, oozing. Lichen Simplex Chronicus usually is localized.
4. **Lichen Simplex Chronicus**
- Supporting Evidence: Lichenification of skin due to chronic rubbing, intense itchiness, especially in localized areas, plus the serpiginous border.
- Consolidated Critiques: Larger areas of affected skin unlike Prurigo Nodularis. No oozing or crusting unlike Chronic Eczema. Silvery scale of Psoriasis missing. Contact Dermatitis usually presents acute symptoms post exposure.
5. **Allergic or Irritant Contact Dermatitis**
- Supporting Evidence: Chronic dryness, exfoliation, and itching response to certain irritants.
- Consolidated Critiques: Doesn't describe nodules typical to Prurigo Nodularis. Not enough weeping and crusting for Chronic Eczema. No silvery scaly plaques like Psoriasis. Lichen Simplex Chronicus is usually localized.

As the Coordinator, I present the compiled evidence to the Admin for a final evaluation on this patient's skin condition."""

ADMIN_REVISE = """As the Admin,

Thank you, Coordinator, for compiling the findings.

Firstly, it's noticeable that the given evidences for "Allergic or Irritant Contact Dermatitis" and "Psoriasis" are relatively weak compared to other diagnoses. I agree with the critiques that the chronicity and absence of typical defining characteristics such as acute flare-ups in the case of dermatitis and silvery scales in the case of psoriasis make these diagnoses less likely.

Focusing on "Prurigo Nodularis", the evidence is plausible but the image description does not mention the typical nodular lumps that are characteristic of this disease.

"Lichen Simplex Chronicus" has supportive evidence that strongly aligns with chronic itching and lichenification, yet the widespread presence of the disease contradicts the usual localized occurrence of this condition.

"Chronic Eczema" also aligns well with the majority of described symptoms, including itching, chronicity, and lichenification. The absence of strong objections in the critiques and aforementioned aligning symptoms gives strength to this diagnosis.

Considering all compiled evidence and critiques, it seems that Chronic Eczema might be the most likely diagnosis given the available information. However, some uncertainty remains due to overlapping symptoms with other conditions and the lack of additional diagnostic tests.

Diagnostic Specialist Sam, I would like you to enhance your evidence for 'Chronic Eczema' in light of the critiques provided by other specialists. Please refer to the following critiques and provide more specific details that distinguish Chronic Eczema from other conditions:

1. Prurigo Nodularis: Your analysis could benefit from addressing whether or not the absence of nodules is indeed conclusive evidence against this diagnosis.

2. Lichen Simplex Chronicus: Can you further explain the distinguishing factors between these two conditions? Specifically, consider the details regarding distribution and impact of itch-induced scratching.

3. Identification or ruling out of 'Allergic or Irritant Contact Dermatitis': Please provide more info that can make this differentiation clearer.
REVISE: Sam"""

SAM_ENHANCED = """As Diagnostic Specialist Sam,

Enhanced Evidence for 'Chronic Eczema':

To revisit and strengthen my diagnosis supporting Chronic Eczema, let's address the critiques:

1. Absence of nodules in Prurigo Nodularis: Prurigo Nodularis is characterized by hard, itchy nodules which may be paired with lichenification because of chronic scratching. However, such nodules are not explicitly reported in this clinical presentation. Instead, we note widespread erythematous patches with various sizes and serpiginous borders, a pattern more consistent with chronic eczema.

2. Distinguishing features between Chronic Eczema and Lichen Simplex Chronicus: Though both conditions show lichenification due to chronic scratching, they do have differing behaviors. Lichen Simplex Chronicus usually exhibits itself in one or two specific regions of the body, whereas Chronic Eczema can affect larger, more widespread areas as described in this clinical case. Thus, the widespread distribution here lends more credence to a diagnosis of Chronic Eczema rather than the typically localized Lichen Simplex Chronicus.

3. Differentiating between Chronic Eczema and Allergic or Irritant Contact Dermatitis: Contact Dermatitis generally surfaces as an acute flare-up following exposure to a particular substance and often resolves once the irritant or allergen is avoided, whereas Chronic Eczema's cause is multifactorial - influenced not only by external irritants but also by internal factors, such as the patient's immune response. Furthermore, Chronic Eczema exhibits a distinctive pattern of flares and subsiding inflammation over time. This history of enduring for over a decade and recurrent nature of the skin condition directs more towards Chronic Eczema.

Overall, despite sharing common symptoms like itching and skin alterations with the mentioned conditions, Chronic Eczema appears to fit best given the specifics of the condition's distribution and chronicity."""

ADMIN_FINAL = """As the Admin,

Thank you, Sam, for the enhanced evidence and Coordinator for your facilitation.

Taking into account the evidences and critiques from all Diagnostic Specialists and the enhanced evidence provided by Sam, I conclude that in the absence of any further diagnostic tests or additional information, the most accurate diagnosis among the provided probable diseases for this case is Chronic Eczema. The patient's long term history, reported symptoms like itching wherever the patient scratches, the recurrent nature of the condition, and clinical information like widespread erythematous patches all point towards Chronic Eczema.

Please **TERMINATE** the conversation, Coordinator."""


def mac_appendix():
    base = ROOT / "mac_appendix"
    dump(base / "case.json", dict(case_id="appendix", query=APPENDIX_QUERY, observation=APPENDIX_OBSERVATION,
                                  candidates=APPENDIX_CANDIDATES, specialist_names=APPENDIX_NAMES,
                                  ground_truth="chronic eczema"))
    entries = [dict(stage="mac", contains="You are Rick. Your assigned disease", responses=[RICK])]
    for name, (own, evidence, crits) in OTHER_SPECIALISTS.items():
        body = ["EVIDENCE:", evidence]
        for d in APPENDIX_CANDIDATES:
            if d != own:
                body += [f"CRITIQUE {d}:", crits[d]]
        entries.append(dict(stage="mac", contains=f"You are {name}. Your assigned disease",
                            responses=["\n".join(body)]))
    entries.append(dict(stage="mac", contains="All specialists have reported", responses=[CONSOLIDATION]))
    entries.append(dict(stage="mac", contains="As the Admin, evaluate the compiled evidence",
                        responses=[ADMIN_REVISE, ADMIN_FINAL]))
    entries.append(dict(stage="mac", contains="You are Sam. The Admin asked you to refine",
                        responses=[SAM_ENHANCED]))
    dump(base / "script.json", dict(entries=entries))


# ------------------------------------------------------------------ tables

# Ranking outcomes whose hit counts are fixed per method. Every fourth hit
# spells the ground truth with different case and punctuation so the
# comparison has to go through normalization.
TABLE_METHODS = [
    ("rerank_naive", 47, 20, 26),
    ("rerank_expert_context", 47, 25, 29),
    ("rerank_expert_image", 47, 21, 26),
    ("mac_mg_gr", 15, 8, None),
    ("mac", 15, 11, None),
]
POOL = ["psoriasis", "chronic eczema", "tinea corporis", "acne vulgaris", "rosacea", "urticaria",
        "vitiligo", "lichen planus", "scabies", "impetigo", "melasma", "alopecia areata"]


def tables():
    out = {}
    for method, total, top1, top2 in TABLE_METHODS:
        rows = []
        for i in range(total):
            gt = POOL[i % len(POOL)]
            others = [p for p in POOL if p != gt]
            a, b, c = others[i % 11], others[(i + 3) % 11], others[(i + 7) % 11]
            if i < top1:
                head = gt.upper() + "." if i % 4 == 3 else gt
                ranking = [head, a, b]
            elif top2 is not None and i < top2:
                ranking = [a, gt, b]
            else:
                ranking = [a, b, c]
            rows.append(dict(case_id=f"{method}_{i + 1:02d}", ground_truth=gt, ranking=ranking))
        out[method] = dict(total=total, top1_hits=top1, top2_hits=top2, outcomes=rows)
    dump(ROOT / "tables" / "rank_outcomes.json", out)


if __name__ == "__main__":
    synthetic10()
    apo_toy()
    mac_appendix()
    tables()
