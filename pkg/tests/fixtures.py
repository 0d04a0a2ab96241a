"""Six synthetic participants (three patients, three controls) exercising
every corner of the protocol: multi-part prompts, the nothing-else checkbox,
provider notes, and a hospital recording location.

Profiles and spoken-answer texts double as the ground truth for report and
evaluation tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from voiceintake.domain import (
    RAINBOW_PASSAGE,
    CohortLabel,
    PromptId,
    SessionRecord,
    Transcript,
    prompt_key,
    utc_now,
)

P1 = prompt_key(PromptId.P1_HEALTH_BASELINE, 1)
P2 = prompt_key(PromptId.P2_ILLNESS_TRAJECTORY, 1)
P3 = prompt_key(PromptId.P3_VOICE_BASELINE, 1)
P4_VOWELS = prompt_key(PromptId.P4_PHONATION, 1)
P4_RAINBOW = prompt_key(PromptId.P4_PHONATION, 2)
P5_NASAL = prompt_key(PromptId.P5_BREATHING, 1)
P5_DEEP = prompt_key(PromptId.P5_BREATHING, 2)
P6 = prompt_key(PromptId.P6_ADDITIONAL_INFO, 1)
P7 = prompt_key(PromptId.P7_PROVIDER_NOTE, 1)


@dataclass
class FixtureParticipant:
    name: str
    cohort: CohortLabel
    page_answers: dict[int, dict]
    spoken: dict[str, str] = field(default_factory=dict)  # prompt key -> transcript text
    p6_checkbox: bool = False
    rr_bpm: float = 15.0  # ground truth for the synthesized nasal recording

    @property
    def screening_answer(self) -> str:
        return "yes" if self.cohort is CohortLabel.PATIENT else "no"


def _pages(age, weight, sex, race, occupation, insurance, education, location,
           history, symptoms=None, duration=None, progression=None, screening="no"):
    pages = {
        1: {"illness_screening": screening, "age": age, "sex": sex, "weight_lb": weight},
        2: {"race": race, "occupation": occupation, "education": education,
            "insurance": insurance},
        3: {"recording_location": location},
        5: {"health_history": sorted(history)},
    }
    if symptoms is not None:
        pages[4] = {
            "symptoms": sorted(symptoms),
            "symptom_duration_days": duration,
            "symptom_progression": progression,
        }
    return pages


PATIENT_A = FixtureParticipant(
    name="patient-a",
    cohort=CohortLabel.PATIENT,
    page_answers=_pages(
        40, 175, "Male", "White", "Physician", "Private", "Graduate", "Home",
        [], symptoms=["Cough", "Sore throat"], duration=3, progression="Worse",
        screening="yes",
    ),
    spoken={
        P1: (
            "Overall, I am very healthy. I have seasonal allergies and occasional "
            "acid reflux. I do not take any regular medications other than an "
            "occasional medicine for seasonal allergies like an antihistamine or "
            "an occasional medication for acid reflux."
        ),
        P2: (
            "My symptoms started about three to four days ago. I started to have "
            "a slight sore throat and a mild dry cough. I also had a slight "
            "headache at that time, but it has since resolved, period. Over the "
            "next few days, I have had worsening dry cough and a mild to moderate "
            "sore throat, period. My sore throat has remained about the same, but "
            "my cough has worsened. I have not felt the need to take medications "
            "for my symptoms up to this point, other than I've tried to increase "
            "my hydration and increase my sleep."
        ),
        P3: "My voice has become more raspy and deeper.",
        P4_RAINBOW: RAINBOW_PASSAGE,
        P7: (
            "Exam shows mild pharyngeal erythema without exudate, lungs clear. "
            "Rapid strep negative. Assessment is viral pharyngitis; supportive "
            "care and follow-up if symptoms worsen."
        ),
    },
    p6_checkbox=True,
    rr_bpm=15.0,
)

PATIENT_B = FixtureParticipant(
    name="patient-b",
    cohort=CohortLabel.PATIENT,
    page_answers=_pages(
        55, 117, "Female", "White", "Nurse", "Public", "College", "Home",
        [], symptoms=["Headache", "Runny nose", "Sore throat", "Productive cough"],
        duration=3, progression="NoChange", screening="yes",
    ),
    spoken={
        P1: (
            "I have good overall health, no chronic conditions. I do have "
            "seasonal allergies for which I take Allegra 60 milligrams twice a day."
        ),
        P2: (
            "On day one, symptoms started in the afternoon with voice hoarseness, "
            "sinus and nasal congestion. By day two, the throat was still hoarse "
            "but also sore at this time with increased congestion and a headache. "
            "I used ibuprofen and Tylenol for the sore throat pain and the "
            "headache. On day three, I had increased congestion, both sinus and "
            "nasal, and my lymph nodes were swollen. The sore throat was worse and "
            "my voice was only at a whisper and still had a headache. I continued "
            "to use Tylenol and ibuprofen. Ibuprofen assisted with the throat pain "
            "but did not completely eliminate it. I did do a COVID test. On day "
            "three, that came back negative for COVID. Day four, pretty much the "
            "same as day three. Throat still sore, no real improvement. Headache "
            "and lots of sinus and nasal congestion."
        ),
        P3: (
            "I did notice a big voice change. In fact, that was the first real "
            "symptom on day one, was having a hoarse voice. By day two, it was "
            "even more hoarse. And as the day went on, that's when my throat began "
            "to get more painful. And by day 3, my voice was at a complete "
            "whisper. Today is day 4."
        ),
        P4_RAINBOW: RAINBOW_PASSAGE,
        P6: (
            "On day one I was in a home where there was a cleaning lady and when I "
            "first walked in the smell of the cleaning product was so strong that "
            "I instantly started to cough and felt some issues."
        ),
        P7: (
            "Swollen anterior cervical nodes, erythematous pharynx, voice at a "
            "whisper. Home COVID test negative. Likely viral laryngitis; voice "
            "rest, fluids, and return if fever develops."
        ),
    },
    rr_bpm=18.0,
)

PATIENT_C = FixtureParticipant(
    name="patient-c",
    cohort=CohortLabel.PATIENT,
    page_answers=_pages(
        74, 152, "Female", "Hispanic", "Nurse", "Private", "Graduate",
        "HospitalClinic",
        ["Hypertension", "Cardiovascular disease", "Thyroid disorders"],
        symptoms=["Sore throat", "Muscle aches"], duration=3, progression="Improving",
        screening="yes",
    ),
    spoken={
        P1: (
            "Once in a while I will get some back pains, but I've had history of "
            "back surgery. And nerve blocks. I really don't have any other pains. "
            "Once I did have a little bit of chest pain, but the doctor had me on "
            "telemetry and nothing serious was found. And I haven't been that "
            "sick. I've been feeling well. I've gotten better. I got better from "
            "everything. I get better. Not only my health, my mental health, but "
            "my physical health. I am growing rapidly. I'm making more progress "
            "as I believe in my own condition."
        ),
        P2: (
            "Let's start talking. Okay. My health is, I guess it's okay. I've "
            "been under the weather this week a little bit with a sore throat and "
            "with a little bit of coughing and bringing up some sputum, but it's "
            "getting much better. And this past week, I started with having a "
            "stuffy nose and a sore throat. And so I started taking, I thought "
            "maybe it could be related to allergies. I started taking some "
            "over-the-counter medication for day and for night for cold and "
            "flu-type symptoms. And that seemed to help. And that's about all. "
            "And I drank vitamin C. I did a little gargling with saline. And "
            "that's it."
        ),
        P3: (
            "I have not noticed any changes in my speech pattern. I'm bilingual. "
            "Sometimes I speak in Spanish to my Spanish family and sometimes I "
            "speak in English, so I haven't had any problems."
        ),
        P4_RAINBOW: RAINBOW_PASSAGE,
        P7: (
            "Seen at bedside with nursing. Throat mildly injected, afebrile, "
            "lungs clear, improving on supportive care. Continue current plan."
        ),
    },
    p6_checkbox=True,
    rr_bpm=12.0,
)

CONTROL_A = FixtureParticipant(
    name="control-a",
    cohort=CohortLabel.CONTROL,
    page_answers=_pages(
        52, 155, "Female", "No Response", "Nurse", "Public", "College", "Home",
        ["Chronic pain", "Autoimmune disease", "Sleep disorders", "Depression/anxiety"],
    ),
    spoken={
        P1: (
            "So, when I was a teenager, I started passing out after track meets "
            "and always had low blood pressure. And they said that I was just "
            "hypotensive, even though I wasn't on blood pressure medications, and "
            "that I was hyperventilating, and then said that I had athletically "
            "induced asthma. I continued on currently having pain, then I was "
            "finally diagnosed with endometriosis and had pain for that, which "
            "caused the anxiety disorder, because being in a lot of pain all the "
            "time is horrible. When I got into my 30s and symptoms started "
            "becoming worse, fatigue, lack of concentration, just chronic pain "
            "all over my body, like nerve sensations, passing out, not being able "
            "to do exercise, total chronic fatigue, and I would stand up from a "
            "chair at work and I would just instantly blackout. So, that took me "
            "to 2010 to finally be diagnosed via a sweat test and a tilt table "
            "test, but I had POTS syndrome and dysautonomia."
        ),
        P3: (
            "So a lot of people say that my brain fog is worse due to "
            "dysautonomia, my voice gets cracky at times and I search for words "
            "and have a hard time pronouncing words that I used to pronounce fine "
            "before this."
        ),
        P4_RAINBOW: RAINBOW_PASSAGE,
    },
    p6_checkbox=True,
    rr_bpm=14.0,
)

CONTROL_B = FixtureParticipant(
    name="control-b",
    cohort=CohortLabel.CONTROL,
    page_answers=_pages(
        75, 175, "Female", "White", "Retired", "Public", "Graduate", "Home",
        ["Thyroid disorders", "Cancer", "Sleep disorders"],
    ),
    spoken={
        P1: (
            "My health history is I have had atrial fibrillation, which is now "
            "cured. I am actively sleeping well, being well, reading well about "
            "health. And, I do have lymphedema in one of my legs, and I work with "
            "that. The thyroid, I've had that since I was about 18. I was "
            "hypothyroid, and then I became hyperthyroid, then I became "
            "hypothyroid, and now I'm back to hyperthyroid again, but we've just "
            "changed it. And, when it's regulated, I feel really good. And the "
            "cancer, I had uterine cancer, but we caught it, and it was grade "
            "one, stage one, it was 14 years ago."
        ),
        P3: (
            "Yeah, I think I noticed, I don't have AFib anymore because I had the "
            "surgery, but I think I noticed a change in my voice when the AFib "
            "started. And I also noticed changes in my voice when my thyroid is "
            "active. You can hear it in my voice today, actually. But it sounds "
            "more raspy and more irritated, you know, instead of clear and strong."
        ),
        P4_RAINBOW: RAINBOW_PASSAGE,
    },
    p6_checkbox=True,
    rr_bpm=16.0,
)

CONTROL_C = FixtureParticipant(
    name="control-c",
    cohort=CohortLabel.CONTROL,
    page_answers=_pages(
        56, 139, "Female", "Black/AA", "Landscaper", "Private", "College", "Home",
        ["Multiple sclerosis", "Cancer"],
    ),
    spoken={
        P1: (
            "I have breast cancer, stage 1, I've had for 5 years, it's been "
            "remission. I also have multiple sclerosis; it's been remission for "
            "about 20 years. Both is under control; I have minor symptoms from "
            "both. And I was not on any drugs for the cancer or didn't have to "
            "get chemo or radiation. It was at the beginning stages of the "
            "cancer. And the MS, I have managed to keep it under control by good "
            "diet, exercise regularly, and trying to be as stress free as "
            "possible."
        ),
        P3: (
            "With the MS, sometimes the voice is not as strong, it gets a little "
            "low on occasions when you're tired or fatigued, sometimes the voice "
            "gets a little low because the air can't push up to your diaphragm "
            "properly to make the voice sound strong or as clear as usual. So "
            "that's the only change with the voice is due to the MS, the cancer, "
            "that has no change in the voice at all."
        ),
        P4_RAINBOW: RAINBOW_PASSAGE,
        P6: (
            "I do have minor, minor effects from both the MS as well as the "
            "breast cancer. The breast cancer, I just had pain from the site of "
            "the surgery because the tumors were taken out of the right breast "
            "and the lymph nodes. So the only effects I have from that is the "
            "pain from the surgery, occasionally I'll get a sharp pain where the "
            "surgery was, but that is to be expected, especially when I do a lot."
        ),
    },
    rr_bpm=20.0,
)

ALL_PARTICIPANTS = [PATIENT_A, PATIENT_B, PATIENT_C, CONTROL_A, CONTROL_B, CONTROL_C]


def make_record(participant: FixtureParticipant, include_transcripts: bool = True,
                frozen: bool = False) -> SessionRecord:
    """Build a SessionRecord directly (no audio) for report and eval tests."""
    from voiceintake.store import build_profile

    now = utc_now()
    answers = dict(participant.page_answers)
    transcripts = {}
    if include_transcripts:
        for key, text in participant.spoken.items():
            pid, _, part = key.partition("/")
            transcripts[key] = Transcript(PromptId(pid), int(part), text, "mock-asr/1", now)
    return SessionRecord(
        session_id=participant.name,
        cohort=participant.cohort,
        created_at=now,
        consent_given=True,
        consent_at=now,
        screening_answer=participant.screening_answer,
        profile=build_profile(participant.cohort, answers),
        answers_by_page=answers,
        transcripts=transcripts,
        frozen=frozen,
    )
